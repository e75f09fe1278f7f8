"""Command-line front end.

One subcommand per experiment.  Every option can also come from a JSON
config file (--config): top-level sections named after subcommands hold
option defaults, and explicit flags override them.  Exit codes: 0 success,
1 usage error, 2 experiment failure.
"""

import argparse
import json
import logging
import sys
import time

import numpy as np

from .cachemap import CacheGeometry, color_table, usable_colors
from .contention import BandwidthTask, ContentionPlan, run_plan
from .control_loop import (
    LogActuatorSink,
    LoopConfig,
    discretize_steering,
    make_frame_source,
    run_control_loop,
)
from .network import build_dave2, xavier_init
from .regulator import RegulatorBudget, regulated_run
from .reporting import (
    EnvironmentSnapshot,
    FrequencyMonitor,
    aggregate,
    default_matrix_config,
    report_from_samples,
    run_matrix,
    summary_rows_from_report,
    write_bench_csv,
    write_plan_csv,
    write_summary_csv,
    write_timing_csv,
)
from .session import InferenceSession
from .training import (
    DatasetIndex,
    DatasetRecord,
    TrainConfig,
    load_record_frame,
    train,
    write_loss_csv,
)
from .weights_io import load_weights, save_weights

log = logging.getLogger("steerbench")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_size(text):
    """'512K' / '32K' / '1M' / plain bytes."""
    text = str(text).strip()
    mult = 1
    if text[-1:].upper() in ("K", "M", "G"):
        mult = {"K": 1024, "M": 1024 ** 2, "G": 1024 ** 3}[text[-1].upper()]
        text = text[:-1]
    return int(text) * mult


def _parse_geometry(text):
    """'<size>,<ways>,<line>' e.g. 512K,16,64."""
    parts = text.split(",")
    if len(parts) != 3:
        raise _UsageError(f"cache geometry must be <size>,<ways>,<line_bytes>, got {text!r}")
    return CacheGeometry(total_bytes=_parse_size(parts[0]), ways=int(parts[1]),
                         line_bytes=_parse_size(parts[2]))


def _session_from_args(args, seed_default=0):
    spec = build_dave2()
    if getattr(args, "weights", None):
        store = load_weights(args.weights, spec)
    else:
        store = xavier_init(spec, seed=getattr(args, "seed", seed_default))
        log.info("no --weights given; using freshly initialized weights")
    return spec, InferenceSession(spec, store, worker_count=getattr(args, "workers", 1))


def _load_input_frame(path, input_shape):
    if str(path).endswith(".npy"):
        arr = np.load(path)
        if arr.dtype != np.uint8:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            if arr.shape != tuple(input_shape):
                raise ValueError(f"{path}: float frame must be {tuple(input_shape)}, got {arr.shape}")
            return arr
    return load_record_frame(DatasetRecord(frame=str(path), angle=0.0), input_shape)


def cmd_infer(args):
    spec, session = _session_from_args(args)
    with session:
        frame = _load_input_frame(args.image, spec.input_shape)
        angle = session.infer(frame)
    print(f"angle_deg={angle!r} discrete={discretize_steering(angle)}")
    return 0


def cmd_train(args):
    index = DatasetIndex.from_manifest(args.manifest, args.val_manifest)
    config = TrainConfig(batch_size=args.batch_size, steps=args.steps,
                         learning_rate=args.lr, seed=args.seed, sampler=args.sampler)
    counts = index.counts()
    print(f"dataset: {counts['train']} train ({counts['curved']} curved, "
          f"{counts['straight']} straight), {counts['validation']} validation")
    result = train(index, config)
    save_weights(result.store, args.out)
    if args.loss_csv:
        write_loss_csv(result.loss_history, args.loss_csv)
    print(f"final training loss: {result.loss_history[-1]:.6f}")
    if result.validation_loss is not None:
        print(f"validation loss: {result.validation_loss:.6f}")
    print(f"weights written to {args.out}")
    return 0


def cmd_loop(args):
    spec, session = _session_from_args(args)
    source = make_frame_source(args.frames, seed=args.seed)
    sink = LogActuatorSink(args.actuator_log) if args.actuator_log else None
    config = LoopConfig(period_ms=args.period_ms, iterations=args.iterations,
                        warmup=args.warmup, rt_priority=args.rt or None)
    monitor = FrequencyMonitor().start()
    with session:
        result = run_control_loop(config, source, session, sink)
    monitor.stop()
    if sink:
        sink.close()
    if not result.samples:
        raise RuntimeError("loop produced no samples (source exhausted during warmup?)")
    env = EnvironmentSnapshot.probe(rt_applied=result.rt_applied,
                                    freq_monitored=monitor.available,
                                    throttled=monitor.throttled(),
                                    warmup_discarded=result.warmup_discarded)
    report = report_from_samples(result.samples, config.period_ms, env)
    if args.out:
        write_timing_csv(result.samples, args.out)
        print(f"trace written to {args.out}")
    if args.summary:
        write_summary_csv(summary_rows_from_report(args.name, report), args.summary)
    for stage, stats in report.stages.items():
        print(f"{stage:>10}: mean {stats.mean:7.3f} ms  p99 {stats.p99:7.3f} ms  "
              f"max {stats.maximum:7.3f} ms")
    print(f"deadline misses: {report.deadline_misses}/{report.sample_count} "
          f"(period {config.period_ms} ms)")
    if result.incomplete:
        print("note: frame source ran dry before the iteration budget")
    if env.throttled:
        print("warning: CPU frequency dipped below 90% of max during the run")
    return 0


def cmd_bench(args):
    worker_list = [int(w) for w in str(args.workers_list).split(",") if w]
    if not worker_list:
        raise _UsageError("--workers-list needs at least one worker count")
    spec = build_dave2()
    store = (load_weights(args.weights, spec) if args.weights
             else xavier_init(spec, seed=args.seed))
    frame = np.random.default_rng(args.seed).random(tuple(spec.input_shape), dtype=np.float32)
    rows = []
    for workers in worker_list:
        with InferenceSession(spec, store, worker_count=workers) as session:
            for _ in range(args.warmup):
                session.infer(frame)
            samples = []
            for _ in range(args.iterations):
                t0 = time.perf_counter_ns()
                session.infer(frame)
                samples.append((time.perf_counter_ns() - t0) / 1e6)
        stats = aggregate(samples)
        rows.append((workers, stats))
        print(f"workers={workers}: mean {stats.mean:7.3f} ms  p99 {stats.p99:7.3f} ms")
    if args.out:
        write_bench_csv(rows, args.out)
        print(f"results written to {args.out}")
    return 0


def cmd_contend(args):
    plan = ContentionPlan.load(args.plan)
    result = run_plan(plan, iterations=args.iterations, warmup=args.warmup, seed=args.seed)
    for outcome in result.outcomes:
        if outcome.samples_ms is not None:
            stats = aggregate(outcome.samples_ms)
            print(f"{outcome.spec.name}: mean {stats.mean:.3f} ms  p99 {stats.p99:.3f} ms  "
                  f"pinned={outcome.affinity_pinned}")
        else:
            bw = outcome.bandwidth
            print(f"{outcome.spec.name}: {bw.mbps:.1f} MB/s over {bw.elapsed_s:.2f} s  "
                  f"pinned={outcome.affinity_pinned}")
    if args.out:
        write_plan_csv(result, args.out)
        print(f"results written to {args.out}")
    return 0


def cmd_regulate(args):
    task = BandwidthTask(args.mode,
                         array_bytes=int(args.array_mib * 1024 ** 2),
                         llc_bytes=int(args.llc_kib * 1024))
    budget = RegulatorBudget(args.budget_mbps, args.period_ms)
    result = regulated_run(task, budget, duration_s=args.duration_s)
    print(f"budget {args.budget_mbps} MB/s -> achieved {result.mbps:.1f} MB/s "
          f"({result.bytes_moved} bytes in {result.elapsed_s:.2f} s)")
    if args.out:
        with open(args.out, "w") as f:
            f.write("budget_mbps,mode,achieved_mbps,bytes_moved\n")
            f.write(f"{args.budget_mbps!r},{args.mode},{result.mbps!r},{result.bytes_moved}\n")
        print(f"results written to {args.out}")
    return 0


def cmd_colors(args):
    l2 = _parse_geometry(args.l2)
    l1 = _parse_geometry(args.l1)
    bits, count = usable_colors(l2, l1, page_bytes=args.page)
    bit_text = ",".join(str(b) for b in bits) if bits else "none"
    print(f"usable colors: {count} (bits {bit_text})")
    if args.table:
        for pfn, color in enumerate(color_table(bits, page_bytes=args.page)):
            print(f"pfn {pfn}: color {color}")
    return 0


def cmd_matrix(args):
    cfg = {}
    if args.iterations is not None:
        cfg["iterations"] = args.iterations
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.pinning:
        cfg["pinning"] = args.pinning
    result = run_matrix(cfg, out_dir=args.out)
    ok = 0
    for cell in result.cells:
        if cell.status == "ok":
            ok += 1
            print(f"{cell.name}: ok (mean infer {cell.mean_infer_ms:.3f} ms) -> {cell.csv_path}")
        else:
            print(f"{cell.name}: FAILED ({cell.error})")
    print(f"summary written to {result.summary_path}")
    return 0 if ok else 2


def build_parser():
    parser = _Parser(
        prog="steerbench",
        description="Steering CNN inference benchmark: train and run the network, then "
                    "measure how a periodic inference loop behaves under core scaling, "
                    "cache/memory contention, and per-core bandwidth regulation.",
    )
    parser.add_argument("--config", help="JSON file with per-subcommand option defaults")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("infer", help="run the network once on one image and print the angle",
                       description="Single inference: load weights, preprocess one image, "
                                   "print the continuous angle and its -30/0/+30 snap.")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True, help=".npy/.raw/.png/.jpg frame")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("train", help="train weights from a manifest of labeled frames",
                       description="Minibatch SGD on MSE over <frame-file>,<angle> manifest "
                                   "lines; writes a weight file and optional per-step loss CSV.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--val-manifest", default=None)
    p.add_argument("--out", required=True, help="output weight file")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--sampler", choices=("uniform", "balanced"), default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss-csv", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("loop", help="periodic capture->preprocess->infer->actuate loop",
                       description="Drives the full control pipeline at a fixed period and "
                                   "reports per-stage latencies and deadline misses; the "
                                   "inference stage should dominate the period budget.")
    p.add_argument("--weights", default=None)
    p.add_argument("--frames", default="synthetic",
                   help="'synthetic' or a directory of frames to replay")
    p.add_argument("--period-ms", type=float, default=33.3)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rt", type=int, default=0,
                   help="SCHED_FIFO priority for the loop thread (0 = normal scheduler)")
    p.add_argument("--out", default=None, help="per-iteration trace CSV")
    p.add_argument("--summary", default=None, help="aggregate summary CSV")
    p.add_argument("--actuator-log", default=None, help="actuation CSV log")
    p.add_argument("--name", default="loop", help="experiment name used in the summary CSV")
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("bench", help="inference latency versus intra-inference worker count",
                       description="Times bare inference at each worker count; on a multicore "
                                   "host the mean should drop as workers are added.")
    p.add_argument("--weights", default=None)
    p.add_argument("--workers-list", default="1,2,4")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="workers,mean_ms,... CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("contend", help="run a JSON contention plan",
                       description="Launches inference tasks and bandwidth co-runners "
                                   "together (after a common barrier) and reports per-task "
                                   "latencies and achieved bandwidth; measures how shared "
                                   "memory traffic inflates inference time.")
    p.add_argument("--plan", required=True, help="plan JSON file")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="plan,task,metric,value CSV")
    p.set_defaults(func=cmd_contend)

    p = sub.add_parser("regulate", help="run one bandwidth task under a per-period budget",
                       description="Demonstrates per-period byte budgeting: a memory hog is "
                                   "admission-checked every chunk against a 1 ms quota, so "
                                   "achieved bandwidth lands on the budget.")
    p.add_argument("--mode", choices=("read", "write"), default="write")
    p.add_argument("--budget-mbps", type=float, required=True)
    p.add_argument("--period-ms", type=float, default=1.0)
    p.add_argument("--duration-s", type=float, default=2.0)
    p.add_argument("--array-mib", type=float, default=64.0)
    p.add_argument("--llc-kib", type=float, default=512.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_regulate)

    p = sub.add_parser("colors", help="cache partitioning color math for a cache pair",
                       description="Computes which physical address bits can color pages for "
                                   "L2 partitioning without constraining L1 placement.")
    p.add_argument("--l2", default="512K,16,64", help="<size>,<ways>,<line> e.g. 512K,16,64")
    p.add_argument("--l1", default="32K,4,64")
    p.add_argument("--page", type=lambda s: _parse_size(s), default=4096)
    p.add_argument("--table", action="store_true", help="print one full PFN->color cycle")
    p.set_defaults(func=cmd_colors)

    p = sub.add_parser("matrix", help="run the full experiment grid into a directory",
                       description="Baseline, worker scaling, co-scheduling, and co-runner "
                                   "cells (plus optional regulator sweeps), one CSV each "
                                   "plus summary.csv; failed cells are recorded and skipped.")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--pinning", choices=("auto", "strict", "none"), default=None)
    p.set_defaults(func=cmd_matrix)

    return parser, sub


def _apply_config_defaults(parser, sub_actions, argv):
    """Fill option defaults from the JSON --config file; flags still win."""
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if path is None:
        return
    with open(path) as f:
        config = json.load(f)
    if not isinstance(config, dict):
        raise _UsageError(f"{path}: config must be a JSON object")
    command = next((a for a in argv if not a.startswith("-") and a in sub_actions.choices), None)
    if command is None:
        return
    section = config.get(command, {})
    if not isinstance(section, dict):
        raise _UsageError(f"{path}: section {command!r} must be a JSON object")
    sub_parser = sub_actions.choices[command]
    known = {a.dest for a in sub_parser._actions}
    unknown = [k for k in section if k.replace("-", "_") not in known]
    if unknown:
        raise _UsageError(f"{path}: unknown option(s) {unknown} for subcommand {command!r}")
    sub_parser.set_defaults(**{k.replace("-", "_"): v for k, v in section.items()})


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, sub_actions = build_parser()
    try:
        if not argv:
            raise _UsageError("a subcommand is required")
        _apply_config_defaults(parser, sub_actions, argv)
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise _UsageError("a subcommand is required")
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except Exception as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
