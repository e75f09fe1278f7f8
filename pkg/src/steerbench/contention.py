"""Shared-resource contention experiments.

Two building blocks: BandwidthTask, a sequential memory reader/writer whose
working set defeats the last-level cache, and ContentionPlan, a declarative
bundle of tasks (inference sessions and bandwidth hogs) pinned to cores and
launched together.  run_plan() executes a plan and returns per-task results;
inference tasks report per-iteration latencies, bandwidth tasks report bytes
moved and achieved MB/s.

The LLC size is a configuration input, never probed; co-runner arrays
default to 4x that size so sequential traversal always misses.
"""

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .control_loop import sleep_until
from .network import build_dave2, xavier_init
from .regulator import RegulatorBudget, RegulatorConfigError
from .session import InferenceSession

log = logging.getLogger(__name__)

DEFAULT_LLC_BYTES = 512 * 1024  # config default, not probed
MAX_REGULATED_CHUNK = 4096


@njit(nogil=True, cache=True)
def _write_chunk(arr, lo, hi, val):
    for i in range(lo, hi):
        arr[i] = val


@njit(nogil=True, cache=True)
def _read_chunk(arr, lo, hi):
    s = 0
    for i in range(lo, hi):
        s += arr[i]
    return s


@dataclass
class BandwidthResult:
    bytes_moved: int
    elapsed_s: float
    checksum: int = 0
    periods: dict = None  # period index -> bytes, when recorded

    @property
    def mbps(self):
        if self.elapsed_s <= 0:
            return 0.0
        return self.bytes_moved / 1e6 / self.elapsed_s


class BandwidthTask:
    """Sequential circular read or write traffic over one large array.

    mode 'read' sums 8-byte words (the sum is published in the result so the
    loop cannot be optimized away); mode 'write' stores a constant.  The
    array is allocated and faulted in by the constructor, before any timing.
    """

    def __init__(self, mode, array_bytes=None, llc_bytes=DEFAULT_LLC_BYTES,
                 chunk_bytes=64 * 1024, allow_small_array=False):
        if mode not in ("read", "write"):
            raise ValueError(f"mode must be 'read' or 'write', got {mode!r}")
        if array_bytes is None:
            array_bytes = 4 * llc_bytes
        if array_bytes < 4 * llc_bytes and not allow_small_array:
            raise ValueError(
                f"array_bytes {array_bytes} < 4x LLC ({llc_bytes}); pass allow_small_array=True "
                f"if a cache-resident task is really what you want"
            )
        words = max(1, int(array_bytes) // 8)
        chunk_words = max(1, min(int(chunk_bytes), array_bytes) // 8)
        self.mode = mode
        self.array_bytes = words * 8
        self.chunk_bytes = chunk_words * 8
        self._chunk_words = chunk_words
        self._arr = np.empty(words, dtype=np.int64)
        self._arr[:] = 1  # fault every page in before anyone starts a clock
        # trigger kernel compilation here too, not inside a timed run
        _write_chunk(self._arr, 0, 1, 1)
        _read_chunk(self._arr, 0, 1)

    def run(self, duration_s=None, iterations=None, stop_event=None, budget=None,
            epoch=None, record_periods=False):
        """Move chunks until the duration, iteration count, or stop event hits.

        iterations counts chunks exactly (byte accounting: bytes_moved ==
        iterations * chunk_bytes).  With a budget, each chunk is admission-
        checked against the current period's remaining quota; chunks are
        capped at 4 KiB so enforcement granularity stays fine.
        """
        if duration_s is None and iterations is None and stop_event is None:
            raise ValueError("need duration_s, iterations, or stop_event")
        arr = self._arr
        words = arr.shape[0]
        chunk_words = self._chunk_words
        if budget is not None:
            chunk_words = min(chunk_words, MAX_REGULATED_CHUNK // 8)
            quota = budget.bytes_per_period
            if chunk_words * 8 > quota:
                raise RegulatorConfigError(
                    f"chunk of {chunk_words * 8} bytes exceeds the per-period quota "
                    f"of {quota} bytes ({budget.budget_mbps} MB/s @ {budget.period_ms} ms)"
                )
            period_s = budget.period_ms / 1000.0
        chunk_bytes = chunk_words * 8
        periods = {} if record_periods else None
        write = self.mode == "write"
        checksum = 0
        moved = 0
        done = 0
        pos = 0
        cur_period = -1
        used = 0
        start = time.perf_counter()
        if epoch is None:
            epoch = start
        while True:
            if stop_event is not None and stop_event.is_set():
                break
            now = time.perf_counter()
            if duration_s is not None and now - start >= duration_s:
                break
            if iterations is not None and done >= iterations:
                break
            if budget is not None:
                idx = int((now - epoch) / period_s)
                if idx != cur_period:
                    cur_period = idx
                    used = 0
                if used + chunk_bytes > quota:
                    sleep_until(epoch + (cur_period + 1) * period_s)
                    continue
            if pos + chunk_words > words:
                pos = 0
            if write:
                _write_chunk(arr, pos, pos + chunk_words, done + 1)
            else:
                checksum += _read_chunk(arr, pos, pos + chunk_words)
            pos += chunk_words
            moved += chunk_bytes
            used += chunk_bytes
            done += 1
            if periods is not None and budget is not None:
                periods[cur_period] = periods.get(cur_period, 0) + chunk_bytes
        elapsed = time.perf_counter() - start
        return BandwidthResult(bytes_moved=moved, elapsed_s=elapsed,
                               checksum=checksum, periods=periods)


class PlanError(ValueError):
    """Contention plan that cannot run as written."""


@dataclass
class TaskSpec:
    """One task in a plan: kind 'cnn' (measured) or 'bandwidth' (co-runner)."""

    kind: str
    name: str = ""
    cores: tuple = ()
    worker_count: int = 1        # cnn: intra-inference threads
    mode: str = "write"          # bandwidth: read or write
    array_mib: float = None      # bandwidth: working set, default 4x LLC
    budget_mbps: float = None    # bandwidth: regulate when set
    budget_period_ms: float = 1.0


@dataclass
class ContentionPlan:
    name: str
    tasks: list
    dedicated: bool = True
    llc_mib: float = DEFAULT_LLC_BYTES / (1024 * 1024)

    def to_json(self):
        return json.dumps({
            "name": self.name,
            "dedicated": self.dedicated,
            "llc_mib": self.llc_mib,
            "tasks": [
                {k: v for k, v in {
                    "kind": t.kind, "name": t.name, "cores": list(t.cores),
                    "worker_count": t.worker_count, "mode": t.mode,
                    "array_mib": t.array_mib, "budget_mbps": t.budget_mbps,
                    "budget_period_ms": t.budget_period_ms,
                }.items() if v is not None}
                for t in self.tasks
            ],
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        tasks = []
        for i, t in enumerate(raw.get("tasks", [])):
            kind = t.get("kind")
            if kind not in ("cnn", "bandwidth"):
                raise PlanError(f"task {i}: kind must be 'cnn' or 'bandwidth', got {kind!r}")
            tasks.append(TaskSpec(
                kind=kind,
                name=t.get("name", f"{kind}{i}"),
                cores=tuple(int(c) for c in t.get("cores", [])),
                worker_count=int(t.get("worker_count", 1)),
                mode=t.get("mode", "write"),
                array_mib=t.get("array_mib"),
                budget_mbps=t.get("budget_mbps"),
                budget_period_ms=float(t.get("budget_period_ms", 1.0)),
            ))
        return cls(name=raw.get("name", "plan"), tasks=tasks,
                   dedicated=bool(raw.get("dedicated", True)),
                   llc_mib=float(raw.get("llc_mib", DEFAULT_LLC_BYTES / (1024 * 1024))))

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())


def plan_for_shorthand(shorthand, cores=None, llc_mib=None, dedicated=True):
    """Expand an NxC co-scheduling shorthand like '4Nx1C' into a plan.

    N inference models, each running C intra-inference worker threads on its
    own group of C cores.
    """
    m = re.fullmatch(r"(\d+)Nx(\d+)C", shorthand)
    if not m:
        raise PlanError(f"bad shorthand {shorthand!r}, expected like '2Nx2C'")
    n_models, n_workers = int(m.group(1)), int(m.group(2))
    if n_models < 1 or n_workers < 1:
        raise PlanError(f"{shorthand}: counts must be >= 1")
    needed = n_models * n_workers
    if cores is None:
        cores = list(range(needed))
    if dedicated and len(cores) < needed:
        raise PlanError(f"{shorthand} needs {needed} cores, got {len(cores)}")
    tasks = []
    for i in range(n_models):
        # undedicated plans leave every task unpinned
        group = tuple(cores[i * n_workers:(i + 1) * n_workers]) if dedicated else ()
        tasks.append(TaskSpec(kind="cnn", name=f"model{i}", cores=group,
                              worker_count=n_workers))
    kwargs = {"llc_mib": llc_mib} if llc_mib is not None else {}
    return ContentionPlan(name=shorthand, tasks=tasks, dedicated=dedicated, **kwargs)


def corunner_plan(n_corunners, mode, name=None, array_mib=64.0, budget_mbps=None,
                  main_cores=(0,), dedicated=True, llc_mib=None):
    """One measured inference task plus n bandwidth co-runners on the following cores."""
    tasks = [TaskSpec(kind="cnn", name="main",
                      cores=tuple(main_cores) if dedicated else (), worker_count=1)]
    next_core = (max(main_cores) + 1) if main_cores else 1
    for i in range(n_corunners):
        tasks.append(TaskSpec(kind="bandwidth", name=f"{mode}{i}",
                              cores=(next_core + i,) if dedicated else (),
                              mode=mode, array_mib=array_mib, budget_mbps=budget_mbps))
    kwargs = {"llc_mib": llc_mib} if llc_mib is not None else {}
    return ContentionPlan(name=name or f"{n_corunners}x{mode}", tasks=tasks,
                          dedicated=dedicated, **kwargs)


def validate_plan(plan, cpu_count=None):
    cpu_count = cpu_count if cpu_count is not None else (os.cpu_count() or 1)
    if not plan.tasks:
        raise PlanError("plan has no tasks")
    if not any(t.kind == "cnn" for t in plan.tasks):
        raise PlanError("plan has no measured cnn task")
    for t in plan.tasks:
        for c in t.cores:
            if c < 0 or c >= cpu_count:
                raise PlanError(f"task {t.name!r} requests core {c}, host has cores 0..{cpu_count - 1}")
    if plan.dedicated:
        seen = {}
        for t in plan.tasks:
            if not t.cores:
                raise PlanError(f"dedicated plan but task {t.name!r} has no core assignment")
            for c in t.cores:
                if c in seen:
                    raise PlanError(
                        f"dedicated plan oversubscribes core {c} ({seen[c]!r} and {t.name!r})")
                seen[c] = t.name


@dataclass
class TaskOutcome:
    spec: TaskSpec
    samples_ms: list = None        # cnn tasks
    bandwidth: BandwidthResult = None  # bandwidth tasks
    affinity_pinned: bool = False


@dataclass
class PlanResult:
    plan: ContentionPlan
    outcomes: list
    iterations: int
    warmup: int

    def outcome(self, name):
        for o in self.outcomes:
            if o.spec.name == name:
                return o
        raise KeyError(name)

    @property
    def main(self):
        return next(o for o in self.outcomes if o.spec.kind == "cnn")


def _pin_self(cores):
    if not cores or not hasattr(os, "sched_setaffinity"):
        if cores:
            log.warning("no thread affinity on this platform; task runs unpinned")
        return False
    os.sched_setaffinity(0, set(cores))
    return True


def run_plan(plan, spec=None, store=None, iterations=200, warmup=5, seed=0):
    """Execute every task in the plan concurrently and collect results.

    All tasks set up (weights, buffers, page faults, warmup inferences)
    before a common barrier; bandwidth co-runners then hold until the first
    measured task signals its first timed iteration, so no co-runner bytes
    predate the measurement window.  Co-runners stop when the main task
    finishes its iterations.
    """
    validate_plan(plan)
    spec = spec if spec is not None else build_dave2()
    base_store = store if store is not None else xavier_init(spec, seed)
    llc_bytes = int(plan.llc_mib * 1024 * 1024)
    cnn_tasks = [t for t in plan.tasks if t.kind == "cnn"]
    main_task = cnn_tasks[0]
    barrier = threading.Barrier(len(plan.tasks))
    start_event = threading.Event()
    stop_event = threading.Event()
    outcomes = {}
    errors = []
    lock = threading.Lock()

    def cnn_body(task, task_idx):
        pinned = _pin_self(task.cores)
        # each model gets its own copy of the weights: distinct working sets,
        # as if independently trained models were co-scheduled
        own = base_store.copy()
        sess = InferenceSession(spec, own, worker_count=task.worker_count)
        if task.cores:
            sess.set_affinity(task.cores)
        rng = np.random.default_rng(seed + 1000 + task_idx)
        frame = rng.random(tuple(spec.input_shape), dtype=np.float32)
        try:
            for _ in range(warmup):
                sess.infer(frame)
            barrier.wait()
            if task is main_task:
                start_event.set()
            else:
                start_event.wait()
            samples = []
            for _ in range(iterations):
                t0 = time.perf_counter_ns()
                sess.infer(frame)
                samples.append((time.perf_counter_ns() - t0) / 1e6)
            with lock:
                outcomes[task.name] = TaskOutcome(spec=task, samples_ms=samples,
                                                  affinity_pinned=pinned)
        finally:
            if task is main_task:
                stop_event.set()
            sess.close()

    def bw_body(task, task_idx):
        pinned = _pin_self(task.cores)
        array_bytes = int(task.array_mib * 1024 * 1024) if task.array_mib else None
        bw = BandwidthTask(task.mode, array_bytes=array_bytes, llc_bytes=llc_bytes)
        budget = None
        if task.budget_mbps is not None:
            budget = RegulatorBudget(task.budget_mbps, task.budget_period_ms)
        barrier.wait()
        start_event.wait()
        result = bw.run(stop_event=stop_event, budget=budget)
        with lock:
            outcomes[task.name] = TaskOutcome(spec=task, bandwidth=result,
                                              affinity_pinned=pinned)

    def wrap(fn, task, task_idx):
        def body():
            try:
                fn(task, task_idx)
            except Exception as exc:  # surface thread failures to the caller
                errors.append((task.name, exc))
                stop_event.set()
                start_event.set()
                try:
                    barrier.abort()
                except Exception:
                    pass
        return body

    threads = []
    for idx, t in enumerate(plan.tasks):
        body = cnn_body if t.kind == "cnn" else bw_body
        th = threading.Thread(target=wrap(body, t, idx), name=f"plan-{t.name}", daemon=True)
        threads.append(th)
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        name, exc = errors[0]
        raise RuntimeError(f"plan task {name!r} failed: {exc}") from exc
    ordered = [outcomes[t.name] for t in plan.tasks]
    return PlanResult(plan=plan, outcomes=ordered, iterations=iterations, warmup=warmup)


def bw_run(task, duration_s=None, iterations=None, stop_event=None):
    """Unregulated bandwidth run (thin alias kept for symmetry with regulated_run)."""
    return task.run(duration_s=duration_s, iterations=iterations, stop_event=stop_event)
