import numpy as np
import pytest

from steerbench.network import build_dave2, forward_activations, xavier_init, zero_init
from steerbench.session import InferenceSession, _block_ranges
from steerbench.tensor_ops import ShapeError


@pytest.fixture(scope="module")
def dave():
    spec = build_dave2()
    return spec, xavier_init(spec, seed=21)


@pytest.fixture(scope="module")
def frame():
    return np.random.default_rng(77).random((66, 200, 3), dtype=np.float32)


def test_block_ranges_cover_everything():
    for total in (1, 2, 5, 24, 64, 100):
        for blocks in (1, 2, 3, 4, 7):
            ranges = _block_ranges(total, blocks)
            covered = []
            for lo, hi in ranges:
                covered.extend(range(lo, hi))
            assert covered == list(range(total))


def test_matches_reference_composition(dave, frame):
    spec, store = dave
    ref = float(forward_activations(spec, store, frame)[0])
    with InferenceSession(spec, store, worker_count=1) as sess:
        assert sess.infer(frame) == ref


def test_bit_identical_across_worker_counts(dave, frame):
    spec, store = dave
    outs = set()
    for workers in (1, 2, 4):
        with InferenceSession(spec, store, worker_count=workers) as sess:
            outs.add(sess.infer(frame))
    assert len(outs) == 1


def test_bit_identical_across_repeats(dave, frame):
    spec, store = dave
    with InferenceSession(spec, store, worker_count=2) as sess:
        outs = {sess.infer(frame) for _ in range(10)}
    assert len(outs) == 1


def test_zero_weights_zero_output(frame):
    spec = build_dave2()
    with InferenceSession(spec, zero_init(spec)) as sess:
        assert sess.infer(frame) == 0.0


def test_frame_shape_rejected(dave):
    spec, store = dave
    with InferenceSession(spec, store) as sess:
        with pytest.raises(ShapeError):
            sess.infer(np.zeros((66, 100, 3), dtype=np.float32))


def test_float64_frame_coerced(dave, frame):
    spec, store = dave
    with InferenceSession(spec, store) as sess:
        a = sess.infer(frame)
        b = sess.infer(frame.astype(np.float64))
    assert a == b


def test_worker_count_validation(dave):
    spec, store = dave
    with pytest.raises(ValueError):
        InferenceSession(spec, store, worker_count=0)


def test_oversubscribed_workers_allowed_with_warning(dave, frame, caplog):
    spec, store = dave
    import logging
    import os

    many = (os.cpu_count() or 1) + 4
    with caplog.at_level(logging.WARNING, logger="steerbench.session"):
        with InferenceSession(spec, store, worker_count=many) as sess:
            out = sess.infer(frame)
    assert np.isfinite(out)
    assert any("exceeds" in r.getMessage() for r in caplog.records)


def test_closed_session_rejects_infer(dave, frame):
    spec, store = dave
    sess = InferenceSession(spec, store)
    sess.close()
    with pytest.raises(RuntimeError):
        sess.infer(frame)


def test_infer_many(dave):
    spec, store = dave
    rng = np.random.default_rng(5)
    frames = [rng.random((66, 200, 3), dtype=np.float32) for _ in range(3)]
    with InferenceSession(spec, store) as sess:
        outs = sess.infer_many(frames)
        again = [sess.infer(f) for f in frames]
    assert list(outs) == again


def test_set_affinity_reports_support(dave):
    import os

    spec, store = dave
    with InferenceSession(spec, store, worker_count=2) as sess:
        applied = sess.set_affinity([0])
    assert applied == hasattr(os, "sched_setaffinity")
