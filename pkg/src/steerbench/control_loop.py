"""Periodic capture -> preprocess -> infer -> actuate loop with per-stage timing.

The loop releases iterations on absolute period boundaries computed from one
start timestamp (drift-free: boundary k is start + k*period regardless of
how late earlier iterations ran).  A missed deadline is recorded and the
next release skips forward to the next future boundary instead of bursting
to catch up.
"""

import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .tensor_ops import ShapeError

log = logging.getLogger(__name__)

STEERING_ANGLES = (-30, 0, 30)

# duty cycle percentages for a 50 Hz hobby servo: 1.0ms/1.5ms/2.0ms pulses
DEFAULT_PWM_MAP = {-30: 5.0, 0: 7.5, 30: 10.0}


def preprocess(image, out_h=66, out_w=200):
    """Nearest-neighbour resize of an (h, w, 3) byte image and scale to [0, 1].

    Sampling uses pixel centers: source row of output row i is
    floor((i + 0.5) * in_h / out_h), and likewise for columns, so an identity
    -sized input maps to itself exactly.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected an (h, w, 3) image, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise TypeError(f"expected uint8 pixels, got {image.dtype}")
    in_h, in_w = image.shape[:2]
    rows = np.floor((np.arange(out_h) + 0.5) * in_h / out_h).astype(np.intp)
    cols = np.floor((np.arange(out_w) + 0.5) * in_w / out_w).astype(np.intp)
    sampled = image[rows][:, cols]
    return sampled.astype(np.float32) / np.float32(255.0)


def discretize_steering(angle):
    """Snap a continuous angle in degrees to the closest of -30, 0, +30.

    Ties at exactly +/-15 degrees go to 0 (prefer straight).
    """
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    if abs(angle) <= 15.0:
        return 0
    return 30 if angle > 0 else -30


def angle_to_pwm(discrete_angle, pwm_map=None):
    """Map a discrete steering angle to a PWM duty-cycle percentage."""
    pwm_map = DEFAULT_PWM_MAP if pwm_map is None else pwm_map
    try:
        return float(pwm_map[discrete_angle])
    except KeyError:
        raise ValueError(
            f"no PWM entry for angle {discrete_angle}; expected one of {sorted(pwm_map)}"
        ) from None


class SyntheticFrameSource:
    """Deterministic random byte images, the stand-in for a camera."""

    def __init__(self, count=None, seed=0, height=480, width=640):
        self.count = count
        self._rng = np.random.default_rng(seed)
        self._shape = (height, width, 3)
        self._produced = 0

    def read(self):
        if self.count is not None and self._produced >= self.count:
            return None
        self._produced += 1
        return self._rng.integers(0, 256, size=self._shape, dtype=np.uint8)


class DirectoryFrameSource:
    """Plays back frames from a directory in sorted filename order.

    Supports .npy (uint8 array), .raw (flat 66*200*3 bytes), and common image
    formats via Pillow.  loop=True wraps around forever, emulating a live
    device fed from recorded data.
    """

    RAW_SHAPE = (66, 200, 3)

    def __init__(self, path, loop=False):
        self.path = str(path)
        self.loop = loop
        names = [n for n in sorted(os.listdir(self.path))
                 if n.rsplit(".", 1)[-1].lower() in ("npy", "raw", "png", "jpg", "jpeg", "bmp")]
        if not names:
            raise FileNotFoundError(f"no frame files in {self.path}")
        self._files = [os.path.join(self.path, n) for n in names]
        self._next = 0

    def read(self):
        if self._next >= len(self._files):
            if not self.loop:
                return None
            self._next = 0
        path = self._files[self._next]
        self._next += 1
        return load_frame_file(path)


def load_frame_file(path):
    """Load one frame file as an (h, w, 3) uint8 array."""
    path = str(path)
    if path.endswith(".npy"):
        arr = np.load(path)
        if arr.dtype != np.uint8:
            raise TypeError(f"{path}: expected uint8 array, got {arr.dtype}")
        return arr
    if path.endswith(".raw"):
        flat = np.fromfile(path, dtype=np.uint8)
        want = DirectoryFrameSource.RAW_SHAPE
        if flat.size != want[0] * want[1] * want[2]:
            raise ValueError(f"{path}: raw frame must be {want[0]}x{want[1]}x3 bytes, got {flat.size}")
        return flat.reshape(want)
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def make_frame_source(kind, seed=0, count=None):
    """Build a frame source from a CLI-ish string: 'synthetic' or a directory path."""
    if kind == "synthetic":
        return SyntheticFrameSource(count=count, seed=seed)
    if os.path.isdir(kind):
        return DirectoryFrameSource(kind, loop=True)
    raise ValueError(f"frame source {kind!r} is neither 'synthetic' nor a directory")


class NullActuatorSink:
    def actuate(self, angle, duty):
        pass

    def close(self):
        pass


class LogActuatorSink:
    """Appends one CSV row per actuation: timestamp_us,angle_deg,pwm_duty."""

    def __init__(self, path):
        self._f = open(path, "w")
        self._f.write("timestamp_us,angle_deg,pwm_duty\n")

    def actuate(self, angle, duty):
        ts_us = time.monotonic_ns() // 1000
        self._f.write(f"{ts_us},{angle},{duty!r}\n")

    def close(self):
        self._f.close()


@dataclass
class TimingSample:
    """Per-iteration stage latencies in milliseconds."""

    index: int
    capture_ms: float
    preprocess_ms: float
    infer_ms: float
    actuate_ms: float
    total_ms: float
    deadline_missed: bool


@dataclass
class LoopConfig:
    period_ms: float = 33.3
    iterations: int = 1000
    warmup: int = 1
    rt_priority: int = None  # SCHED_FIFO priority, None = stay on the default scheduler

    def __post_init__(self):
        if self.period_ms <= 0:
            raise ValueError("period_ms must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.warmup < 0 or self.warmup >= self.iterations:
            raise ValueError("warmup must be in [0, iterations)")


@dataclass
class LoopResult:
    samples: list
    period_ms: float
    warmup_discarded: int
    incomplete: bool = False  # source ran dry before the iteration budget
    rt_applied: bool = False


def apply_rt_priority(priority):
    """Try to switch the calling thread to SCHED_FIFO; warn and carry on if refused."""
    try:
        os.sched_setscheduler(0, os.SCHED_FIFO, os.sched_param(priority))
        return True
    except (AttributeError, PermissionError, OSError) as exc:
        log.warning("could not set SCHED_FIFO priority %s (%s); continuing on the default scheduler",
                    priority, exc)
        return False


def sleep_until(deadline):
    """Sleep to an absolute time.monotonic() timestamp."""
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return
        time.sleep(remaining)


def run_control_loop(config, source, infer, sink=None):
    """Drive the pipeline for config.iterations periods.

    infer is either an object with an .infer(frame) method (a session) or a
    bare callable frame -> angle.  Stage boundaries reuse one timestamp, so
    total_ms equals the sum of the stage times up to clock-read cost.
    Returns a LoopResult; samples excludes the first config.warmup
    iterations (cold caches, lazy compilation).
    """
    sink = sink if sink is not None else NullActuatorSink()
    infer_fn = infer.infer if hasattr(infer, "infer") else infer
    rt_applied = bool(config.rt_priority) and apply_rt_priority(config.rt_priority)
    period_s = config.period_ms / 1000.0
    samples = []
    incomplete = False
    executed = 0
    start = time.monotonic()
    release_idx = 0
    for i in range(config.iterations):
        t0 = time.monotonic()
        image = source.read()
        if image is None:
            incomplete = True
            break
        executed += 1
        t1 = time.monotonic()
        frame = preprocess(image)
        t2 = time.monotonic()
        angle = infer_fn(frame)
        t3 = time.monotonic()
        discrete = discretize_steering(angle)
        sink.actuate(discrete, angle_to_pwm(discrete))
        t4 = time.monotonic()
        total_ms = (t4 - t0) * 1000.0
        missed = total_ms > config.period_ms
        if i >= config.warmup:
            samples.append(TimingSample(
                index=i,
                capture_ms=(t1 - t0) * 1000.0,
                preprocess_ms=(t2 - t1) * 1000.0,
                infer_ms=(t3 - t2) * 1000.0,
                actuate_ms=(t4 - t3) * 1000.0,
                total_ms=total_ms,
                deadline_missed=missed,
            ))
        if i == config.iterations - 1:
            break
        # next absolute boundary strictly in the future; late iterations skip
        # boundaries instead of releasing a burst
        release_idx += 1
        deadline = start + release_idx * period_s
        now = time.monotonic()
        if now > deadline:
            release_idx = math.ceil((now - start) / period_s)
            deadline = start + release_idx * period_s
        sleep_until(deadline)
    return LoopResult(samples=samples, period_ms=config.period_ms,
                      warmup_discarded=min(config.warmup, executed),
                      incomplete=incomplete, rt_applied=rt_applied)
