"""Timing statistics, CSV emission, frequency monitoring, and the experiment matrix.

aggregate() is deliberately pure Python over sorted inputs with sequential
summation: two independent implementations written this way agree bit for
bit, which the tests exploit by comparing against a from-scratch reference.
numpy reductions (pairwise summation, SIMD lanes) would differ in the last
ulp and are avoided here; these are a few thousand floats at most.

Percentiles use the nearest-rank definition: the ceil(p/100 * n)-th order
statistic, so p99 of 100 samples is the 99th smallest, and any percentile of
a single sample is that sample.
"""

import glob
import json
import math
import os
import threading
from dataclasses import dataclass, field, asdict

from .contention import (
    ContentionPlan,
    TaskSpec,
    corunner_plan,
    plan_for_shorthand,
    run_plan,
)
from .control_loop import TimingSample

STAGES = ("capture", "preprocess", "infer", "actuate", "total")
TIMING_HEADER = "iter,capture_ms,preprocess_ms,infer_ms,actuate_ms,total_ms,missed"


@dataclass(frozen=True)
class AggregateStats:
    count: int
    mean: float
    minimum: float
    maximum: float
    p99: float
    stdev: float


def percentile(sorted_samples, p):
    """Nearest-rank percentile of an ascending-sorted sequence."""
    n = len(sorted_samples)
    if n == 0:
        raise ValueError("no samples")
    rank = math.ceil(p / 100.0 * n)
    rank = min(max(rank, 1), n)
    return sorted_samples[rank - 1]


def aggregate(samples):
    """Mean, min, max, nearest-rank p99, and sample standard deviation.

    Sample stdev uses the n-1 denominator; a single sample has stdev 0.
    """
    xs = sorted(float(x) for x in samples)
    n = len(xs)
    if n == 0:
        raise ValueError("cannot aggregate zero samples")
    total = 0.0
    for x in xs:
        total += x
    mean = total / n
    sq = 0.0
    for x in xs:
        d = x - mean
        sq += d * d
    stdev = math.sqrt(sq / (n - 1)) if n > 1 else 0.0
    return AggregateStats(count=n, mean=mean, minimum=xs[0], maximum=xs[-1],
                          p99=percentile(xs, 99), stdev=stdev)


@dataclass
class EnvironmentSnapshot:
    """What the numbers were measured on, for honest reports."""

    core_count: int = 0
    affinity_supported: bool = False
    rt_applied: bool = False
    freq_monitored: bool = False
    throttled: bool = None  # None = unknown (monitoring unavailable)
    warmup_discarded: int = 0
    notes: list = field(default_factory=list)

    @classmethod
    def probe(cls, **overrides):
        snap = cls(core_count=os.cpu_count() or 1,
                   affinity_supported=hasattr(os, "sched_setaffinity"))
        for k, v in overrides.items():
            setattr(snap, k, v)
        return snap


@dataclass
class TimingReport:
    """Per-stage aggregate statistics for one timing run."""

    stages: dict            # stage name -> AggregateStats
    deadline_misses: int
    sample_count: int
    period_ms: float
    environment: EnvironmentSnapshot = None

    @property
    def miss_rate(self):
        return self.deadline_misses / self.sample_count if self.sample_count else 0.0


def report_from_samples(samples, period_ms, environment=None):
    if not samples:
        raise ValueError("no samples to report on")
    stages = {
        "capture": aggregate([s.capture_ms for s in samples]),
        "preprocess": aggregate([s.preprocess_ms for s in samples]),
        "infer": aggregate([s.infer_ms for s in samples]),
        "actuate": aggregate([s.actuate_ms for s in samples]),
        "total": aggregate([s.total_ms for s in samples]),
    }
    misses = sum(1 for s in samples if s.deadline_missed)
    return TimingReport(stages=stages, deadline_misses=misses,
                        sample_count=len(samples), period_ms=period_ms,
                        environment=environment)


# ---------------------------------------------------------------- CSV I/O

def write_timing_csv(samples, path):
    """Per-iteration loop trace: iter,capture_ms,preprocess_ms,infer_ms,actuate_ms,total_ms,missed."""
    with open(path, "w") as f:
        f.write(TIMING_HEADER + "\n")
        for s in samples:
            f.write(f"{s.index},{s.capture_ms!r},{s.preprocess_ms!r},{s.infer_ms!r},"
                    f"{s.actuate_ms!r},{s.total_ms!r},{int(s.deadline_missed)}\n")


def read_timing_csv(path):
    samples = []
    with open(path) as f:
        header = f.readline().strip()
        if header != TIMING_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            samples.append(TimingSample(
                index=int(parts[0]), capture_ms=float(parts[1]),
                preprocess_ms=float(parts[2]), infer_ms=float(parts[3]),
                actuate_ms=float(parts[4]), total_ms=float(parts[5]),
                deadline_missed=bool(int(parts[6])),
            ))
    return samples


def write_summary_csv(rows, path):
    """Cross-experiment stats: experiment,metric,stage,value rows."""
    with open(path, "w") as f:
        f.write("experiment,metric,stage,value\n")
        for experiment, metric, stage, value in rows:
            f.write(f"{experiment},{metric},{stage},{float(value)!r}\n")


def summary_rows_from_report(experiment, report):
    rows = []
    for stage, stats in report.stages.items():
        rows.append((experiment, "mean_ms", stage, stats.mean))
        rows.append((experiment, "p99_ms", stage, stats.p99))
        rows.append((experiment, "max_ms", stage, stats.maximum))
        rows.append((experiment, "stdev_ms", stage, stats.stdev))
    rows.append((experiment, "miss_rate", "total", report.miss_rate))
    return rows


def write_plan_csv(result, path):
    """Per-task results of one contention plan: plan,task,metric,value rows."""
    with open(path, "w") as f:
        f.write("plan,task,metric,value\n")
        name = result.plan.name
        for o in result.outcomes:
            if o.samples_ms is not None:
                stats = aggregate(o.samples_ms)
                f.write(f"{name},{o.spec.name},mean_ms,{stats.mean!r}\n")
                f.write(f"{name},{o.spec.name},p99_ms,{stats.p99!r}\n")
                f.write(f"{name},{o.spec.name},max_ms,{stats.maximum!r}\n")
                f.write(f"{name},{o.spec.name},stdev_ms,{stats.stdev!r}\n")
                f.write(f"{name},{o.spec.name},iterations,{float(stats.count)!r}\n")
            if o.bandwidth is not None:
                f.write(f"{name},{o.spec.name},bytes_moved,{float(o.bandwidth.bytes_moved)!r}\n")
                f.write(f"{name},{o.spec.name},achieved_mbps,{o.bandwidth.mbps!r}\n")
            f.write(f"{name},{o.spec.name},affinity_pinned,{float(o.affinity_pinned)!r}\n")


def write_bench_csv(rows, path):
    """Worker-count scaling results: workers,mean_ms,p99_ms,max_ms,stdev_ms rows."""
    with open(path, "w") as f:
        f.write("workers,mean_ms,p99_ms,max_ms,stdev_ms\n")
        for workers, stats in rows:
            f.write(f"{workers},{stats.mean!r},{stats.p99!r},{stats.maximum!r},{stats.stdev!r}\n")


# ------------------------------------------------------- frequency monitor

def default_freq_paths():
    return sorted(glob.glob("/sys/devices/system/cpu/cpu*/cpufreq/scaling_cur_freq"))


class FrequencyMonitor:
    """Samples CPU frequency sysfs files on a background thread.

    On hosts without cpufreq sysfs the monitor reports available=False and
    throttling state stays unknown rather than guessed.
    """

    def __init__(self, paths=None, interval_s=0.05):
        self.paths = default_freq_paths() if paths is None else list(paths)
        self.interval_s = interval_s
        self.samples = {p: [] for p in self.paths}
        self._stop = threading.Event()
        self._thread = None
        self.available = bool(self.paths)

    def _sample_once(self):
        for p in list(self.samples):
            try:
                with open(p) as f:
                    self.samples[p].append(int(f.read().strip()))
            except (OSError, ValueError):
                del self.samples[p]
        if not self.samples:
            self.available = False

    def start(self):
        if not self.available:
            return self
        self._sample_once()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def _run(self):
        while not self._stop.wait(self.interval_s):
            self._sample_once()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        return self

    def throttled(self, threshold=0.9):
        """True if any core dipped below threshold * its own max; None if unknown."""
        if not self.available or not any(self.samples.values()):
            return None
        return any(trace_throttled(vals, threshold)
                   for vals in self.samples.values() if vals)


def trace_throttled(values, threshold=0.9):
    """Offline check of one frequency trace: any sample below threshold * max."""
    values = list(values)
    if not values:
        raise ValueError("empty frequency trace")
    top = max(values)
    return any(v < threshold * top for v in values)


def load_freq_trace(path):
    """One frequency value (kHz) per line."""
    with open(path) as f:
        return [int(line.strip()) for line in f if line.strip()]


# ------------------------------------------------------------- the matrix

def default_matrix_config():
    """The canonical 14-cell experiment grid.

    baseline + worker scaling {2,3,4} + co-scheduling {1Nx1C,4Nx1C,1Nx2C,2Nx2C}
    + {1,2,3} co-runners x {read,write}.  Regulator sweep cells are added by
    putting budgets (MB/s) into regulator_budgets.
    """
    return {
        "iterations": 300,
        "warmup": 5,
        "seed": 0,
        "llc_mib": 0.5,
        "array_mib": 64.0,
        "workers": [2, 3, 4],
        "cosched": ["1Nx1C", "4Nx1C", "1Nx2C", "2Nx2C"],
        "corunner_counts": [1, 2, 3],
        "corunner_modes": ["read", "write"],
        "regulator_budgets": [],
        "pinning": "auto",
    }


@dataclass
class MatrixCell:
    name: str
    plan: ContentionPlan
    status: str = "pending"  # pending / ok / failed
    error: str = ""
    csv_path: str = ""
    mean_infer_ms: float = None


@dataclass
class MatrixResult:
    cells: list
    summary_path: str
    out_dir: str

    def cell(self, name):
        for c in self.cells:
            if c.name == name:
                return c
        raise KeyError(name)


def _matrix_cells(cfg):
    llc = cfg["llc_mib"]
    arr = cfg["array_mib"]
    cells = [MatrixCell("baseline", plan_for_shorthand("1Nx1C", llc_mib=llc))]
    cells[0].plan.name = "baseline"
    for w in cfg["workers"]:
        plan = ContentionPlan(
            name=f"scaling_w{w}",
            tasks=[_cnn_task(w)],
            dedicated=True,
            llc_mib=llc,
        )
        cells.append(MatrixCell(f"scaling_w{w}", plan))
    for sh in cfg["cosched"]:
        plan = plan_for_shorthand(sh, llc_mib=llc)
        plan.name = f"cosched_{sh}"
        cells.append(MatrixCell(f"cosched_{sh}", plan))
    for mode in cfg["corunner_modes"]:
        for k in cfg["corunner_counts"]:
            plan = corunner_plan(k, mode, name=f"corunners_{mode}_{k}",
                                 array_mib=arr, llc_mib=llc)
            cells.append(MatrixCell(f"corunners_{mode}_{k}", plan))
    for budget in cfg["regulator_budgets"]:
        plan = corunner_plan(3, "write", name=f"regulate_{int(budget)}",
                             array_mib=arr, budget_mbps=budget, llc_mib=llc)
        cells.append(MatrixCell(f"regulate_{int(budget)}", plan))
    return cells


def _cnn_task(workers):
    return TaskSpec(kind="cnn", name="main", cores=tuple(range(workers)),
                    worker_count=workers)


def _plan_cores_needed(plan):
    return max((c for t in plan.tasks for c in t.cores), default=-1) + 1


def _unpin(plan):
    plan.dedicated = False
    plan.tasks = [TaskSpec(kind=t.kind, name=t.name, cores=(), worker_count=t.worker_count,
                           mode=t.mode, array_mib=t.array_mib, budget_mbps=t.budget_mbps,
                           budget_period_ms=t.budget_period_ms)
                  for t in plan.tasks]
    return plan


def run_matrix(config=None, out_dir=".", spec=None, store=None):
    """Run every cell of the experiment grid, one CSV per cell plus summary.csv.

    A failing cell is recorded in the summary and does not stop the rest.
    With pinning='auto', cells needing more cores than the host has run
    unpinned (recorded per task in the cell CSV); 'strict' fails those cells
    instead, 'none' never pins.
    """
    cfg = default_matrix_config()
    if config:
        cfg.update(config)
    os.makedirs(out_dir, exist_ok=True)
    cpus = os.cpu_count() or 1
    cells = _matrix_cells(cfg)
    pinning = cfg["pinning"]
    if pinning not in ("auto", "strict", "none"):
        raise ValueError(f"pinning must be auto/strict/none, got {pinning!r}")
    for cell in cells:
        if pinning == "none" or (pinning == "auto" and _plan_cores_needed(cell.plan) > cpus):
            _unpin(cell.plan)

    monitor = FrequencyMonitor().start()
    summary_rows = []
    baseline_mean = None
    for cell in cells:
        csv_path = os.path.join(out_dir, f"{cell.name}.csv")
        try:
            result = run_plan(cell.plan, spec=spec, store=store,
                              iterations=cfg["iterations"], warmup=cfg["warmup"],
                              seed=cfg["seed"])
            write_plan_csv(result, csv_path)
            cell.csv_path = csv_path
            cell.status = "ok"
            stats = aggregate(result.main.samples_ms)
            cell.mean_infer_ms = stats.mean
            if cell.name == "baseline":
                baseline_mean = stats.mean
            summary_rows.append((cell.name, "mean_ms", "infer", stats.mean))
            summary_rows.append((cell.name, "p99_ms", "infer", stats.p99))
            summary_rows.append((cell.name, "max_ms", "infer", stats.maximum))
            if baseline_mean:
                summary_rows.append((cell.name, "slowdown", "infer", stats.mean / baseline_mean))
        except Exception as exc:
            cell.status = "failed"
            cell.error = str(exc)
            summary_rows.append((cell.name, "failed", "", 1.0))
    monitor.stop()
    throttled = monitor.throttled()

    env = EnvironmentSnapshot.probe(freq_monitored=monitor.available, throttled=throttled,
                                    warmup_discarded=cfg["warmup"])
    with open(os.path.join(out_dir, "environment.json"), "w") as f:
        json.dump(asdict(env), f, indent=2)
    summary_path = os.path.join(out_dir, "summary.csv")
    write_summary_csv(summary_rows, summary_path)
    return MatrixResult(cells=cells, summary_path=summary_path, out_dir=out_dir)
