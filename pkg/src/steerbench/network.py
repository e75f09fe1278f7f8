"""Network architecture description, parameter accounting, and init.

A network is a flat tuple of layer specs (conv / flatten / fc) applied in
order to an (h, w, ch) input.  The canonical architecture built by
build_dave2() maps a 66x200x3 camera frame to a single steering angle in
degrees: five valid-padding conv layers (24@5x5/s2, 36@5x5/s2, 48@5x5/s2,
64@3x3, 64@3x3), flatten, then fc 100 -> 50 -> 10 -> 1 with ReLU on every
hidden layer and a linear output.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import (
    ConvParams,
    FcParams,
    ShapeError,
    conv_out_hw,
    conv2d_forward,
    conv2d_backward,
    fc_forward,
    fc_backward,
    relu,
)


@dataclass(frozen=True)
class LayerSpec:
    """One layer. kind is 'conv', 'flatten', or 'fc'.

    conv uses kh/kw/in_ch/out_ch/stride; fc uses in_dim/out_dim; flatten has
    no parameters.  activation is 'relu' or 'linear'.
    """

    kind: str
    kh: int = 0
    kw: int = 0
    in_ch: int = 0
    out_ch: int = 0
    stride: tuple = (1, 1)
    in_dim: int = 0
    out_dim: int = 0
    activation: str = "linear"


def conv_layer(kh, kw, in_ch, out_ch, stride=(1, 1), activation="relu"):
    if min(kh, kw, in_ch, out_ch) < 1:
        raise ValueError("conv dimensions must be >= 1")
    return LayerSpec("conv", kh=kh, kw=kw, in_ch=in_ch, out_ch=out_ch,
                     stride=(int(stride[0]), int(stride[1])), activation=activation)


def fc_layer(in_dim, out_dim, activation="relu"):
    if min(in_dim, out_dim) < 1:
        raise ValueError("fc dimensions must be >= 1")
    return LayerSpec("fc", in_dim=in_dim, out_dim=out_dim, activation=activation)


def flatten_layer():
    return LayerSpec("flatten")


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layers plus the (h, w, ch) input shape they apply to."""

    layers: tuple
    input_shape: tuple = (66, 200, 3)

    def __post_init__(self):
        shape_chain(self)  # raises if the chain is inconsistent


def shape_chain(spec):
    """Activation shape after the input and after every layer.

    Raises ShapeError if consecutive layers disagree, e.g. a conv whose in_ch
    differs from the previous layer's output channels, or an fc fed the wrong
    length.
    """
    shapes = [tuple(spec.input_shape)]
    cur = tuple(spec.input_shape)
    for idx, layer in enumerate(spec.layers):
        if layer.kind == "conv":
            if len(cur) != 3:
                raise ShapeError(f"layer {idx}: conv needs a 3-d input, have {cur}")
            if cur[2] != layer.in_ch:
                raise ShapeError(
                    f"layer {idx}: conv expects {layer.in_ch} channels, previous output has {cur[2]}"
                )
            oh, ow = conv_out_hw(cur[0], cur[1], layer.kh, layer.kw, *layer.stride)
            cur = (oh, ow, layer.out_ch)
        elif layer.kind == "flatten":
            n = 1
            for d in cur:
                n *= d
            cur = (n,)
        elif layer.kind == "fc":
            if len(cur) != 1:
                raise ShapeError(f"layer {idx}: fc needs a flat input, have {cur} (missing flatten?)")
            if cur[0] != layer.in_dim:
                raise ShapeError(
                    f"layer {idx}: fc expects input length {layer.in_dim}, previous output has {cur[0]}"
                )
            cur = (layer.out_dim,)
        else:
            raise ValueError(f"layer {idx}: unknown kind {layer.kind!r}")
        shapes.append(cur)
    return shapes


def build_dave2():
    return NetworkSpec(
        layers=(
            conv_layer(5, 5, 3, 24, stride=(2, 2)),
            conv_layer(5, 5, 24, 36, stride=(2, 2)),
            conv_layer(5, 5, 36, 48, stride=(2, 2)),
            conv_layer(3, 3, 48, 64),
            conv_layer(3, 3, 64, 64),
            flatten_layer(),
            fc_layer(1152, 100),
            fc_layer(100, 50),
            fc_layer(50, 10),
            fc_layer(10, 1, activation="linear"),
        ),
        input_shape=(66, 200, 3),
    )


def layer_parameter_count(layer):
    if layer.kind == "conv":
        return layer.kh * layer.kw * layer.in_ch * layer.out_ch + layer.out_ch
    if layer.kind == "fc":
        return layer.in_dim * layer.out_dim + layer.out_dim
    return 0


def count_parameters(spec):
    """Total trainable scalars (weights + biases) across all layers."""
    return sum(layer_parameter_count(layer) for layer in spec.layers)


@dataclass(frozen=True)
class ConnectionCounts:
    """Multiply-accumulate edge counts for one full forward pass.

    A conv layer contributes output_elements * (kh*kw*in_ch) edges, an fc
    layer in_dim*out_dim.  Whether the one bias add per output element counts
    as a connection is a matter of convention, so both totals are reported.
    """

    weights: int
    biases: int

    @property
    def without_biases(self):
        return self.weights

    @property
    def with_biases(self):
        return self.weights + self.biases


def count_connections(spec):
    shapes = shape_chain(spec)
    weights = 0
    biases = 0
    for layer, out_shape in zip(spec.layers, shapes[1:]):
        if layer.kind == "conv":
            out_elems = out_shape[0] * out_shape[1] * out_shape[2]
            weights += out_elems * layer.kh * layer.kw * layer.in_ch
            biases += out_elems
        elif layer.kind == "fc":
            weights += layer.in_dim * layer.out_dim
            biases += layer.out_dim
    return ConnectionCounts(weights=weights, biases=biases)


@dataclass
class WeightStore:
    """Parameter arrays for every layer of a spec, index-aligned with spec.layers.

    Each entry is a ConvParams, FcParams, or None (flatten).  seed records how
    the store was initialized when known.
    """

    params: list
    seed: int = None

    def astype(self, dtype):
        out = []
        for p in self.params:
            if isinstance(p, ConvParams):
                out.append(ConvParams(p.kernels.astype(dtype), p.bias.astype(dtype), p.stride))
            elif isinstance(p, FcParams):
                out.append(FcParams(p.weights.astype(dtype), p.bias.astype(dtype)))
            else:
                out.append(None)
        return WeightStore(out, seed=self.seed)

    def copy(self):
        return self.astype(self.dtype)

    @property
    def dtype(self):
        for p in self.params:
            if p is not None:
                return (p.kernels if isinstance(p, ConvParams) else p.weights).dtype
        raise ValueError("store has no parameterized layers")


class WeightSpecMismatchError(ValueError):
    """Weight arrays do not line up with the network spec."""


def check_store_matches(store, spec):
    if len(store.params) != len(spec.layers):
        raise WeightSpecMismatchError(
            f"store has {len(store.params)} layer entries, spec has {len(spec.layers)}"
        )
    for idx, (p, layer) in enumerate(zip(store.params, spec.layers)):
        if layer.kind == "conv":
            want = (layer.kh, layer.kw, layer.in_ch, layer.out_ch)
            if not isinstance(p, ConvParams) or p.kernels.shape != want:
                raise WeightSpecMismatchError(f"layer {idx}: expected conv kernels {want}")
            if p.stride != tuple(layer.stride):
                raise WeightSpecMismatchError(f"layer {idx}: stride {p.stride} != spec {layer.stride}")
        elif layer.kind == "fc":
            want = (layer.out_dim, layer.in_dim)
            if not isinstance(p, FcParams) or p.weights.shape != want:
                raise WeightSpecMismatchError(f"layer {idx}: expected fc weights {want}")
        elif p is not None:
            raise WeightSpecMismatchError(f"layer {idx}: flatten carries no parameters")


def xavier_init(spec, seed=0, dtype=np.float32):
    """Uniform Xavier/Glorot init: W ~ U(-b, b), b = sqrt(6/(fan_in+fan_out)); biases zero.

    conv fan_in = kh*kw*in_ch, fan_out = kh*kw*out_ch.  Layers are drawn in
    network order from one PCG64 stream, so a seed pins every weight.
    """
    rng = np.random.default_rng(seed)
    params = []
    for layer in spec.layers:
        if layer.kind == "conv":
            fan_in = layer.kh * layer.kw * layer.in_ch
            fan_out = layer.kh * layer.kw * layer.out_ch
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            kernels = rng.uniform(-bound, bound,
                                  size=(layer.kh, layer.kw, layer.in_ch, layer.out_ch))
            params.append(ConvParams(kernels.astype(dtype),
                                     np.zeros(layer.out_ch, dtype=dtype), layer.stride))
        elif layer.kind == "fc":
            bound = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
            weights = rng.uniform(-bound, bound, size=(layer.out_dim, layer.in_dim))
            params.append(FcParams(weights.astype(dtype),
                                   np.zeros(layer.out_dim, dtype=dtype)))
        else:
            params.append(None)
    return WeightStore(params, seed=seed)


def zero_init(spec, dtype=np.float32):
    """All-zero weights and biases (useful as a fixture: the net outputs 0)."""
    params = []
    for layer in spec.layers:
        if layer.kind == "conv":
            params.append(ConvParams(
                np.zeros((layer.kh, layer.kw, layer.in_ch, layer.out_ch), dtype=dtype),
                np.zeros(layer.out_ch, dtype=dtype), layer.stride))
        elif layer.kind == "fc":
            params.append(FcParams(np.zeros((layer.out_dim, layer.in_dim), dtype=dtype),
                                   np.zeros(layer.out_dim, dtype=dtype)))
        else:
            params.append(None)
    return WeightStore(params, seed=None)


def forward_activations(spec, store, frame, keep=False):
    """Single-threaded reference forward pass composed from the tensor ops.

    Returns the output vector, or (output, activations) when keep=True where
    activations[i] is the post-activation input of layer i (activations[0] is
    the frame) plus the final output appended; keep=True also records the
    pre-activation outputs needed for backprop as a parallel list.
    """
    check_store_matches(store, spec)
    if frame.shape != tuple(spec.input_shape):
        raise ShapeError(f"frame shape {frame.shape} != network input {spec.input_shape}")
    cur = frame
    inputs = [frame]
    pre_acts = []
    for layer, p in zip(spec.layers, store.params):
        if layer.kind == "conv":
            z = conv2d_forward(cur, p)
        elif layer.kind == "fc":
            z = fc_forward(cur, p)
        else:
            z = cur.reshape(-1)
        cur = relu(z) if layer.activation == "relu" else z
        if keep:
            pre_acts.append(z)
            inputs.append(cur)
    if keep:
        return cur, inputs, pre_acts
    return cur


def backward_pass(spec, store, inputs, pre_acts, grad_out):
    """Backprop through the whole net given forward tapes from forward_activations.

    Returns a list aligned with spec.layers: (grad_w, grad_b) tuples for
    conv/fc layers, None for flatten.
    """
    grads = [None] * len(spec.layers)
    g = grad_out
    for idx in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[idx]
        p = store.params[idx]
        if layer.activation == "relu":
            g = g * (pre_acts[idx] > 0)
        if layer.kind == "conv":
            g, gw, gb = conv2d_backward(inputs[idx], p, g)
            grads[idx] = (gw, gb)
        elif layer.kind == "fc":
            g, gw, gb = fc_backward(inputs[idx], p, g)
            grads[idx] = (gw, gb)
        else:
            g = g.reshape(inputs[idx].shape)
    return grads
