"""Minibatch SGD training on (frame, steering angle) pairs.

Datasets are indexes of records pointing at frames (in-memory arrays or
files) with target angles in degrees.  Records are labeled curved when
|angle| >= 15 degrees, the same threshold the discretizer uses, so the
balanced sampler can counteract the straight-road bias of driving data.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .control_loop import load_frame_file, preprocess
from .network import (
    backward_pass,
    build_dave2,
    check_store_matches,
    count_parameters,
    forward_activations,
    xavier_init,
)
from .tensor_ops import ConvParams, FcParams

CURVED_THRESHOLD_DEG = 15.0


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


class SamplingError(ValueError):
    """Batch specification cannot be met by the dataset."""


@dataclass
class DatasetRecord:
    """One labeled frame: an array, or a path resolved at load time."""

    frame: object
    angle: float

    @property
    def curved(self):
        return abs(self.angle) >= CURVED_THRESHOLD_DEG


def load_record_frame(record, input_shape=(66, 200, 3)):
    """Materialize a record's frame as a float32 [0,1] tensor of input_shape."""
    frame = record.frame
    if isinstance(frame, (str, os.PathLike)):
        frame = load_frame_file(frame)
    frame = np.asarray(frame)
    if frame.dtype == np.uint8:
        if frame.shape == tuple(input_shape):
            frame = frame.astype(np.float32) / np.float32(255.0)
        else:
            frame = preprocess(frame, out_h=input_shape[0], out_w=input_shape[1])
    else:
        frame = np.ascontiguousarray(frame, dtype=np.float32)
    if frame.shape != tuple(input_shape):
        raise ValueError(f"frame shape {frame.shape} does not match input {tuple(input_shape)}")
    return frame


@dataclass
class DatasetIndex:
    """Train/validation record lists."""

    train: list
    validation: list = field(default_factory=list)

    @classmethod
    def from_manifest(cls, train_path, validation_path=None):
        """Each manifest line: <frame-file>,<angle-degrees>. Paths are relative
        to the manifest's directory. Blank lines and #-comments are skipped."""
        return cls(train=_parse_manifest(train_path),
                   validation=_parse_manifest(validation_path) if validation_path else [])

    def counts(self):
        curved = sum(1 for r in self.train if r.curved)
        return {"train": len(self.train), "validation": len(self.validation),
                "curved": curved, "straight": len(self.train) - curved}


def _parse_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                frame_file, angle = line.rsplit(",", 1)
                records.append(DatasetRecord(frame=os.path.join(base, frame_file.strip()),
                                             angle=float(angle)))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected '<frame-file>,<angle-degrees>', "
                                 f"got {line!r}") from None
    if not records:
        raise ValueError(f"{path}: manifest is empty")
    return records


@dataclass
class TrainConfig:
    batch_size: int = 100
    steps: int = 2000
    learning_rate: float = 1e-4
    seed: int = 0
    sampler: str = "uniform"  # or "balanced"

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("batch_size and steps must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.sampler not in ("uniform", "balanced"):
            raise ValueError(f"sampler must be 'uniform' or 'balanced', got {self.sampler!r}")


def mse_loss(predictions, targets):
    """Mean squared error between equal-length 1-d sequences."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"predictions {p.shape} and targets {t.shape} must be equal-length 1-d")
    if p.size == 0:
        raise ValueError("mse of zero samples is undefined")
    d = p - t
    return float(d @ d / p.size)


def sample_batch(index, config, rng):
    """Draw batch_size records (with replacement) from the training split.

    uniform: every record equally likely.  balanced: exactly ceil(b/2) curved
    and floor(b/2) straight records; raises SamplingError naming the empty
    category if one has no records.
    """
    records = index.train
    if not records:
        raise SamplingError("training split is empty")
    if config.sampler == "uniform":
        picks = rng.integers(0, len(records), size=config.batch_size)
        return [records[i] for i in picks]
    curved = [r for r in records if r.curved]
    straight = [r for r in records if not r.curved]
    n_curved = (config.batch_size + 1) // 2
    n_straight = config.batch_size // 2
    if not curved and n_curved:
        raise SamplingError("balanced sampling needs curved records, dataset has none")
    if not straight and n_straight:
        raise SamplingError("balanced sampling needs straight records, dataset has none")
    batch = [curved[i] for i in rng.integers(0, len(curved), size=n_curved)]
    batch += [straight[i] for i in rng.integers(0, len(straight), size=n_straight)]
    return batch


@dataclass
class TrainResult:
    store: object
    loss_history: list           # per-step training batch MSE
    validation_loss: float       # None when the validation split is empty
    config: TrainConfig


def _batch_gradients(spec, store, frames, targets):
    """Average loss and parameter gradients of MSE over one batch."""
    n = len(frames)
    grads = None
    preds = []
    for frame, target in zip(frames, targets):
        out, inputs, pre_acts = forward_activations(spec, store, frame, keep=True)
        pred = float(out[0])
        preds.append(pred)
        # d/dpred of (pred-target)^2 / n, folded into the upstream gradient
        g_out = np.array([2.0 * (pred - target) / n], dtype=out.dtype)
        layer_grads = backward_pass(spec, store, inputs, pre_acts, g_out)
        if grads is None:
            grads = layer_grads
        else:
            for i, lg in enumerate(layer_grads):
                if lg is not None:
                    grads[i] = (grads[i][0] + lg[0], grads[i][1] + lg[1])
    return mse_loss(preds, targets), grads


def _apply_sgd(store, grads, lr):
    for p, g in zip(store.params, grads):
        if g is None:
            continue
        gw, gb = g
        if isinstance(p, ConvParams):
            p.kernels -= (lr * gw).astype(p.kernels.dtype)
            p.bias -= (lr * gb).astype(p.bias.dtype)
        elif isinstance(p, FcParams):
            p.weights -= (lr * gw).astype(p.weights.dtype)
            p.bias -= (lr * gb).astype(p.bias.dtype)


def train(index, config=None, spec=None, initial=None):
    """Plain SGD on MSE.  Returns the trained store and per-step loss history.

    Weights start from `initial` or Xavier init with the config seed.  The
    validation loss is computed once, after the last step, over the entire
    validation split.
    """
    config = config if config is not None else TrainConfig()
    spec = spec if spec is not None else build_dave2()
    store = (initial if initial is not None else xavier_init(spec, seed=config.seed)).copy()
    check_store_matches(store, spec)
    rng = np.random.default_rng(config.seed + 1)
    input_shape = tuple(spec.input_shape)
    loss_history = []
    for step in range(config.steps):
        batch = sample_batch(index, config, rng)
        frames = [load_record_frame(r, input_shape) for r in batch]
        targets = [r.angle for r in batch]
        loss, grads = _batch_gradients(spec, store, frames, targets)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"loss {loss} at step {step}; lower the learning rate "
                f"(was {config.learning_rate})")
        _apply_sgd(store, grads, config.learning_rate)
        loss_history.append(loss)
    validation_loss = None
    if index.validation:
        preds = []
        targets = []
        for r in index.validation:
            frame = load_record_frame(r, input_shape)
            preds.append(float(forward_activations(spec, store, frame)[0]))
            targets.append(r.angle)
        validation_loss = mse_loss(preds, targets)
    return TrainResult(store=store, loss_history=loss_history,
                       validation_loss=validation_loss, config=config)


def write_loss_csv(loss_history, path):
    """Per-step training loss: step,loss rows."""
    with open(path, "w") as f:
        f.write("step,loss\n")
        for step, loss in enumerate(loss_history):
            f.write(f"{step},{loss!r}\n")


def gradient_check(spec, store, frames, targets, analytic=None, h=1e-5):
    """Max relative error between backprop and central finite differences.

    Runs in float64 over the batch MSE loss; refuses networks above 500
    parameters (the FD sweep is two forward passes per scalar).  `analytic`
    substitutes precomputed per-layer gradients, which lets a test prove the
    check catches wrong ones.
    """
    n_params = count_parameters(spec)
    if n_params > 500:
        raise ValueError(f"gradient_check is for tiny nets; {n_params} parameters > 500")
    store = store.astype(np.float64)
    frames = [np.ascontiguousarray(f, dtype=np.float64) for f in frames]
    targets = [float(t) for t in targets]
    if analytic is None:
        _, analytic = _batch_gradients(spec, store, frames, targets)

    def batch_loss():
        preds = [float(forward_activations(spec, store, f)[0]) for f in frames]
        return mse_loss(preds, targets)

    worst = 0.0
    for layer_idx, p in enumerate(store.params):
        g = analytic[layer_idx] if layer_idx < len(analytic) else None
        if p is None:
            continue
        arrays = ((p.kernels, g[0]), (p.bias, g[1])) if isinstance(p, ConvParams) \
            else ((p.weights, g[0]), (p.bias, g[1]))
        for arr, g_arr in arrays:
            flat = arr.reshape(-1)
            g_flat = np.asarray(g_arr, dtype=np.float64).reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = batch_loss()
                flat[i] = orig - h
                down = batch_loss()
                flat[i] = orig
                fd = (up - down) / (2.0 * h)
                a = g_flat[i]
                err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
                worst = max(worst, err)
    return worst
