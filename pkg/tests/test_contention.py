import json
import os
import time

import numpy as np
import pytest

from steerbench.contention import (
    BandwidthTask,
    ContentionPlan,
    PlanError,
    TaskSpec,
    corunner_plan,
    plan_for_shorthand,
    run_plan,
    validate_plan,
)
from steerbench.network import NetworkSpec, conv_layer, fc_layer, flatten_layer, xavier_init

# a small net keeps plan-execution tests quick; the experiments themselves
# default to the full-size network
SMALL_SPEC = NetworkSpec(
    layers=(conv_layer(3, 3, 3, 8, stride=(2, 2)), flatten_layer(),
            fc_layer(7 * 7 * 8, 16), fc_layer(16, 1, activation="linear")),
    input_shape=(15, 15, 3),
)


def small_store():
    return xavier_init(SMALL_SPEC, seed=0)


# -------------------------------------------------------------- bandwidth

def test_mode_validation():
    with pytest.raises(ValueError):
        BandwidthTask("readwrite")


def test_array_defaults_to_4x_llc():
    task = BandwidthTask("read", llc_bytes=1 << 20)
    assert task.array_bytes == 4 << 20


def test_small_array_rejected_unless_allowed():
    with pytest.raises(ValueError):
        BandwidthTask("read", array_bytes=1 << 20, llc_bytes=1 << 20)
    task = BandwidthTask("read", array_bytes=1 << 20, llc_bytes=1 << 20,
                         allow_small_array=True)
    assert task.array_bytes == 1 << 20


def test_exact_byte_accounting():
    task = BandwidthTask("write", array_bytes=4 << 20, llc_bytes=1 << 20,
                         chunk_bytes=64 * 1024)
    result = task.run(iterations=37)
    assert result.bytes_moved == 37 * 64 * 1024
    assert result.elapsed_s > 0


def test_read_publishes_checksum():
    task = BandwidthTask("read", array_bytes=4 << 20, llc_bytes=1 << 20)
    result = task.run(iterations=10)
    # array is initialized to ones: checksum equals words visited
    assert result.checksum == 10 * task.chunk_bytes // 8


def test_duration_stop():
    task = BandwidthTask("write", array_bytes=4 << 20, llc_bytes=1 << 20)
    t0 = time.perf_counter()
    result = task.run(duration_s=0.2)
    wall = time.perf_counter() - t0
    assert 0.15 < wall < 1.0
    assert result.mbps > 0


def test_needs_some_stop_condition():
    task = BandwidthTask("write", array_bytes=4 << 20, llc_bytes=1 << 20)
    with pytest.raises(ValueError):
        task.run()


# ------------------------------------------------------------------ plans

def test_shorthand_4nx1c_structure():
    plan = plan_for_shorthand("4Nx1C")
    cnn = [t for t in plan.tasks if t.kind == "cnn"]
    assert len(cnn) == 4
    assert all(t.worker_count == 1 for t in cnn)
    cores = [t.cores for t in cnn]
    assert cores == [(0,), (1,), (2,), (3,)]


def test_shorthand_2nx2c_structure():
    plan = plan_for_shorthand("2Nx2C")
    assert [t.cores for t in plan.tasks] == [(0, 1), (2, 3)]
    assert all(t.worker_count == 2 for t in plan.tasks)


def test_shorthand_rejects_garbage():
    with pytest.raises(PlanError):
        plan_for_shorthand("4N1C")
    with pytest.raises(PlanError):
        plan_for_shorthand("0Nx1C")


def test_plan_json_roundtrip():
    plan = corunner_plan(2, "read", array_mib=32, budget_mbps=150)
    text = plan.to_json()
    back = ContentionPlan.from_json(text)
    assert back.name == plan.name
    assert back.dedicated == plan.dedicated
    assert [t.kind for t in back.tasks] == [t.kind for t in plan.tasks]
    assert [t.cores for t in back.tasks] == [t.cores for t in plan.tasks]
    assert back.tasks[1].budget_mbps == 150


def test_plan_from_json_rejects_unknown_kind():
    with pytest.raises(PlanError):
        ContentionPlan.from_json(json.dumps({"tasks": [{"kind": "gpu"}]}))


def test_validate_rejects_oversubscribed_dedicated():
    plan = ContentionPlan(name="bad", tasks=[
        TaskSpec(kind="cnn", name="a", cores=(0,)),
        TaskSpec(kind="bandwidth", name="b", cores=(0,), mode="read"),
    ])
    with pytest.raises(PlanError, match="oversubscribes"):
        validate_plan(plan, cpu_count=4)


def test_validate_rejects_missing_cores():
    plan = ContentionPlan(name="bad", tasks=[TaskSpec(kind="cnn", name="a", cores=(9,))])
    with pytest.raises(PlanError, match="core 9"):
        validate_plan(plan, cpu_count=2)


def test_validate_rejects_unpinned_task_in_dedicated_plan():
    plan = ContentionPlan(name="bad", tasks=[TaskSpec(kind="cnn", name="a")])
    with pytest.raises(PlanError, match="no core assignment"):
        validate_plan(plan, cpu_count=4)


def test_validate_needs_a_measured_task():
    plan = ContentionPlan(name="bad", tasks=[
        TaskSpec(kind="bandwidth", name="b", cores=(0,), mode="read")])
    with pytest.raises(PlanError, match="cnn"):
        validate_plan(plan, cpu_count=4)


def test_undedicated_plan_allows_sharing():
    plan = ContentionPlan(name="ok", dedicated=False, tasks=[
        TaskSpec(kind="cnn", name="a", cores=(0,)),
        TaskSpec(kind="bandwidth", name="b", cores=(0,), mode="read"),
    ])
    validate_plan(plan, cpu_count=1)


# -------------------------------------------------------------- execution

def test_run_plan_solo_cnn():
    plan = ContentionPlan(name="solo", dedicated=False,
                          tasks=[TaskSpec(kind="cnn", name="main")], llc_mib=1)
    result = run_plan(plan, spec=SMALL_SPEC, store=small_store(), iterations=20, warmup=3)
    out = result.main
    assert len(out.samples_ms) == 20
    assert all(s > 0 for s in out.samples_ms)


def test_run_plan_with_corunner_counts_bytes():
    # a long enough measured window that the co-runner thread is guaranteed
    # scheduler time even on a single-core host (GIL switch interval is 5 ms)
    plan = corunner_plan(1, "write", array_mib=8, dedicated=False, llc_mib=1)
    result = run_plan(plan, spec=SMALL_SPEC, store=small_store(), iterations=400, warmup=2)
    bw = result.outcome("write0")
    assert bw.bandwidth.bytes_moved > 0
    assert bw.bandwidth.mbps > 0
    assert len(result.main.samples_ms) == 400


def test_run_plan_regulated_corunner():
    plan = corunner_plan(1, "write", array_mib=8, budget_mbps=50, dedicated=False,
                         llc_mib=1)
    result = run_plan(plan, spec=SMALL_SPEC, store=small_store(), iterations=400, warmup=2)
    bw = result.outcome("write0").bandwidth
    assert bw.bytes_moved > 0
    # achieved rate respects the budget (one-chunk slack on short runs)
    assert bw.mbps < 50 * 1.25


def test_run_plan_multiple_models():
    plan = plan_for_shorthand("2Nx1C", dedicated=False)
    result = run_plan(plan, spec=SMALL_SPEC, store=small_store(), iterations=10, warmup=2)
    assert len([o for o in result.outcomes if o.samples_ms is not None]) == 2
    for o in result.outcomes:
        assert len(o.samples_ms) == 10


def test_run_plan_surfaces_task_errors():
    plan = ContentionPlan(name="boom", dedicated=False, tasks=[
        TaskSpec(kind="cnn", name="main"),
        TaskSpec(kind="bandwidth", name="bad", mode="write", array_mib=0.001),
    ], llc_mib=1)
    with pytest.raises(RuntimeError, match="bad"):
        run_plan(plan, spec=SMALL_SPEC, store=small_store(), iterations=5, warmup=1)


@pytest.mark.skipif((os.cpu_count() or 1) < 2, reason="pinning check needs 2 cores")
def test_run_plan_pins_when_possible():
    plan = corunner_plan(1, "read", array_mib=8, llc_mib=1)
    result = run_plan(plan, spec=SMALL_SPEC, store=small_store(), iterations=5, warmup=1)
    assert all(o.affinity_pinned for o in result.outcomes)
