import time

import numpy as np
import pytest

from steerbench.control_loop import (
    DEFAULT_PWM_MAP,
    DirectoryFrameSource,
    LogActuatorSink,
    LoopConfig,
    SyntheticFrameSource,
    angle_to_pwm,
    discretize_steering,
    load_frame_file,
    make_frame_source,
    preprocess,
    run_control_loop,
    sleep_until,
)
from steerbench.tensor_ops import ShapeError


def busy_stub(ms, angle=5.0):
    def stub(frame):
        end = time.perf_counter() + ms / 1000.0
        while time.perf_counter() < end:
            pass
        return angle
    return stub


# ------------------------------------------------------------- preprocess

def test_preprocess_all_zero_image():
    out = preprocess(np.zeros((480, 640, 3), dtype=np.uint8))
    assert out.shape == (66, 200, 3)
    assert out.dtype == np.float32
    assert not out.any()


def test_preprocess_saturated_image():
    out = preprocess(np.full((120, 160, 3), 255, dtype=np.uint8))
    assert np.array_equal(out, np.ones((66, 200, 3), dtype=np.float32))


def test_preprocess_identity_size():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (66, 200, 3), dtype=np.uint8)
    out = preprocess(img)
    assert np.array_equal(out, img.astype(np.float32) / np.float32(255.0))


def test_preprocess_nearest_neighbour_center_sampling():
    # 2x wider/taller image: output pixel i samples source 2i or 2i+1 center
    img = np.zeros((132, 400, 3), dtype=np.uint8)
    img[1::2, 1::2, :] = 255  # odd rows/cols bright
    out = preprocess(img)
    # center of output row i is (i + 0.5) * 2 -> source row 2i+1 (odd -> bright)
    assert out.min() == 1.0


def test_preprocess_rejects_gray():
    with pytest.raises(ShapeError):
        preprocess(np.zeros((66, 200), dtype=np.uint8))
    with pytest.raises(ShapeError):
        preprocess(np.zeros((66, 200, 4), dtype=np.uint8))


def test_preprocess_rejects_float():
    with pytest.raises(TypeError):
        preprocess(np.zeros((66, 200, 3), dtype=np.float32))


# ------------------------------------------------------------ discretize

@pytest.mark.parametrize("angle,expected", [
    (0.0, 0), (14.9, 0), (-14.9, 0), (15.0, 0), (-15.0, 0),
    (15.1, 30), (-15.1, -30), (29.0, 30), (-31.0, -30), (90.0, 30),
])
def test_discretize_cases(angle, expected):
    assert discretize_steering(angle) == expected


def test_discretize_idempotent_on_outputs():
    for a in (-30, 0, 30):
        assert discretize_steering(float(a)) == a


def test_discretize_rejects_nan():
    with pytest.raises(ValueError):
        discretize_steering(float("nan"))


def test_angle_to_pwm():
    assert angle_to_pwm(-30) == 5.0
    assert angle_to_pwm(0) == 7.5
    assert angle_to_pwm(30) == 10.0
    with pytest.raises(ValueError):
        angle_to_pwm(10)
    assert angle_to_pwm(0, {0: 6.0}) == 6.0
    assert set(DEFAULT_PWM_MAP) == {-30, 0, 30}


# ------------------------------------------------------------------ loop

def test_loop_fast_stub_no_misses():
    cfg = LoopConfig(period_ms=25.0, iterations=40, warmup=1)
    result = run_control_loop(cfg, SyntheticFrameSource(seed=0), busy_stub(2.0))
    assert len(result.samples) == 39
    assert not any(s.deadline_missed for s in result.samples)
    assert not result.incomplete


def test_loop_slow_stub_all_miss():
    cfg = LoopConfig(period_ms=10.0, iterations=12, warmup=1)
    result = run_control_loop(cfg, SyntheticFrameSource(seed=0), busy_stub(25.0))
    assert len(result.samples) == 11
    assert all(s.deadline_missed for s in result.samples)


def test_loop_stage_sum_close_to_total():
    cfg = LoopConfig(period_ms=25.0, iterations=15, warmup=1)
    result = run_control_loop(cfg, SyntheticFrameSource(seed=0), busy_stub(2.0))
    for s in result.samples:
        stage_sum = s.capture_ms + s.preprocess_ms + s.infer_ms + s.actuate_ms
        # boundaries share timestamps, so only accumulated float error remains
        assert abs(stage_sum - s.total_ms) < 1e-6


def test_loop_period_spacing_drift_free():
    # iteration wall-clock spacing stays near one period; absolute deadlines
    # prevent cumulative drift
    stamps = []

    def stamping_stub(frame):
        stamps.append(time.perf_counter())
        return 0.0

    cfg = LoopConfig(period_ms=8.0, iterations=30, warmup=0)
    run_control_loop(cfg, SyntheticFrameSource(seed=0), stamping_stub)
    gaps = [b - a for a, b in zip(stamps, stamps[1:])]
    mean_gap = sum(gaps) / len(gaps)
    assert abs(mean_gap - 0.008) < 0.002
    total_drift = stamps[-1] - stamps[0] - 0.008 * (len(stamps) - 1)
    assert abs(total_drift) < 0.010


def test_loop_warmup_discarded():
    cfg = LoopConfig(period_ms=5.0, iterations=10, warmup=3)
    result = run_control_loop(cfg, SyntheticFrameSource(seed=0), busy_stub(0.1))
    assert len(result.samples) == 7
    assert result.samples[0].index == 3
    assert result.warmup_discarded == 3


def test_loop_source_exhaustion_sets_incomplete():
    cfg = LoopConfig(period_ms=5.0, iterations=50, warmup=0)
    result = run_control_loop(cfg, SyntheticFrameSource(count=4, seed=0), busy_stub(0.1))
    assert result.incomplete
    assert len(result.samples) == 4


def test_loop_angles_flow_to_sink(tmp_path):
    log_path = tmp_path / "act.csv"
    sink = LogActuatorSink(log_path)
    cfg = LoopConfig(period_ms=5.0, iterations=6, warmup=0)
    run_control_loop(cfg, SyntheticFrameSource(seed=0), busy_stub(0.1, angle=20.0), sink)
    sink.close()
    lines = log_path.read_text().strip().splitlines()
    assert lines[0] == "timestamp_us,angle_deg,pwm_duty"
    rows = [l.split(",") for l in lines[1:]]
    assert len(rows) == 6
    assert all(r[1] == "30" and float(r[2]) == 10.0 for r in rows)
    stamps = [int(r[0]) for r in rows]
    assert stamps == sorted(stamps)


def test_loop_config_validation():
    with pytest.raises(ValueError):
        LoopConfig(period_ms=0)
    with pytest.raises(ValueError):
        LoopConfig(iterations=0)
    with pytest.raises(ValueError):
        LoopConfig(iterations=5, warmup=5)


def test_sleep_until_absolute():
    target = time.monotonic() + 0.02
    sleep_until(target)
    over = time.monotonic() - target
    assert 0 <= over < 0.01


# --------------------------------------------------------------- sources

def test_synthetic_source_deterministic():
    a = SyntheticFrameSource(count=2, seed=5)
    b = SyntheticFrameSource(count=2, seed=5)
    assert np.array_equal(a.read(), b.read())


def test_directory_source_sorted_and_looping(tmp_path):
    rng = np.random.default_rng(0)
    frames = []
    for i in range(3):
        f = rng.integers(0, 256, (10, 12, 3), dtype=np.uint8)
        np.save(tmp_path / f"frame_{i}.npy", f)
        frames.append(f)
    src = DirectoryFrameSource(tmp_path)
    got = [src.read() for _ in range(3)]
    assert src.read() is None
    for want, have in zip(frames, got):
        assert np.array_equal(want, have)
    looping = DirectoryFrameSource(tmp_path, loop=True)
    for _ in range(7):
        assert looping.read() is not None


def test_directory_source_raw_and_png(tmp_path):
    raw = np.arange(66 * 200 * 3, dtype=np.uint64).astype(np.uint8)
    (tmp_path / "a.raw").write_bytes(raw.tobytes())
    loaded = load_frame_file(tmp_path / "a.raw")
    assert loaded.shape == (66, 200, 3)
    from PIL import Image

    img = np.zeros((8, 9, 3), dtype=np.uint8)
    img[:, :, 1] = 200
    Image.fromarray(img).save(tmp_path / "b.png")
    loaded = load_frame_file(tmp_path / "b.png")
    assert loaded.shape == (8, 9, 3)
    assert np.array_equal(loaded, img)


def test_directory_source_empty(tmp_path):
    with pytest.raises(FileNotFoundError):
        DirectoryFrameSource(tmp_path)


def test_make_frame_source(tmp_path):
    assert isinstance(make_frame_source("synthetic"), SyntheticFrameSource)
    with pytest.raises(ValueError):
        make_frame_source(str(tmp_path / "missing"))
