"""Low-level float tensor ops with a pinned summation order.

Every forward op here accumulates in a fixed sequential order so results are
bit-reproducible across runs, worker counts, and (for a given dtype) across
machines: convolution dot products walk (kernel row, kernel col, input
channel) and fully-connected rows walk the input left to right.  numpy's
dot/sum cannot be used on this path because BLAS and pairwise summation
reorder the additions; the inner loops are compiled with numba instead, which
preserves the written order while still vectorizing across independent
output channels.

Backward passes carry no ordering contract (they are validated against
central finite differences, not bit-compared), so they use plain numpy.

All ops work in float32 or float64; inputs to a single call must agree.
"""

import numpy as np
from numba import njit

SUPPORTED_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Tensor argument has the wrong rank or incompatible dimensions."""


def _check_dtype(name, arr):
    if arr.dtype.type not in SUPPORTED_DTYPES:
        raise TypeError(f"{name} must be float32 or float64, got {arr.dtype}")


def as_tensor(data, dtype=np.float32):
    """Coerce to a C-contiguous float tensor of the given dtype."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    _check_dtype("tensor", arr)
    return arr


def conv_out_hw(in_h, in_w, kh, kw, stride_h, stride_w):
    """Output height/width of a valid (no padding) convolution."""
    if kh > in_h or kw > in_w:
        raise ShapeError(
            f"kernel {kh}x{kw} does not fit input {in_h}x{in_w} without padding"
        )
    if stride_h < 1 or stride_w < 1:
        raise ValueError("stride must be >= 1")
    return (in_h - kh) // stride_h + 1, (in_w - kw) // stride_w + 1


class ConvParams:
    """Weights of one valid-padding conv layer.

    kernels: (kh, kw, in_ch, out_ch), bias: (out_ch,), stride: (sh, sw).
    """

    def __init__(self, kernels, bias, stride=(1, 1)):
        kernels = np.ascontiguousarray(kernels)
        bias = np.ascontiguousarray(bias)
        _check_dtype("kernels", kernels)
        if kernels.ndim != 4:
            raise ShapeError(f"kernels must be 4-d (kh, kw, in_ch, out_ch), got {kernels.shape}")
        if bias.shape != (kernels.shape[3],):
            raise ShapeError(f"bias shape {bias.shape} does not match out_ch {kernels.shape[3]}")
        if bias.dtype != kernels.dtype:
            raise TypeError("bias dtype must match kernels dtype")
        self.kernels = kernels
        self.bias = bias
        self.stride = (int(stride[0]), int(stride[1]))
        if self.stride[0] < 1 or self.stride[1] < 1:
            raise ValueError("stride must be >= 1")

    @property
    def out_channels(self):
        return self.kernels.shape[3]


class FcParams:
    """Weights of one fully-connected layer: weights (out_dim, in_dim), bias (out_dim,)."""

    def __init__(self, weights, bias):
        weights = np.ascontiguousarray(weights)
        bias = np.ascontiguousarray(bias)
        _check_dtype("weights", weights)
        if weights.ndim != 2:
            raise ShapeError(f"weights must be 2-d (out_dim, in_dim), got {weights.shape}")
        if bias.shape != (weights.shape[0],):
            raise ShapeError(f"bias shape {bias.shape} does not match out_dim {weights.shape[0]}")
        if bias.dtype != weights.dtype:
            raise TypeError("bias dtype must match weights dtype")
        self.weights = weights
        self.bias = bias

    @property
    def out_dim(self):
        return self.weights.shape[0]


@njit(nogil=True, cache=True)
def _conv_fwd_kernel(inp, kern, bias, out, sh, sw, f_lo, f_hi):
    # Accumulation order per output element: kernel row, kernel col, channel.
    # The innermost f loop runs over independent accumulators, so it changes
    # nothing about each element's addition sequence.
    out_h, out_w, _ = out.shape
    kh, kw, in_ch, _ = kern.shape
    for i in range(out_h):
        for j in range(out_w):
            for f in range(f_lo, f_hi):
                out[i, j, f] = 0.0
            for r in range(kh):
                for c in range(kw):
                    for ch in range(in_ch):
                        x = inp[i * sh + r, j * sw + c, ch]
                        for f in range(f_lo, f_hi):
                            out[i, j, f] += x * kern[r, c, ch, f]
            for f in range(f_lo, f_hi):
                out[i, j, f] += bias[f]


@njit(nogil=True, cache=True)
def _fc_fwd_kernel(weights, x, bias, out, o_lo, o_hi):
    n = x.shape[0]
    for o in range(o_lo, o_hi):
        acc = x.dtype.type(0.0)
        for i in range(n):
            acc += weights[o, i] * x[i]
        out[o] = acc + bias[o]


def conv2d_forward(inp, params, out=None, channel_range=None):
    """Valid-padding 2-d convolution of an (h, w, in_ch) tensor.

    When channel_range=(lo, hi) is given only output channels [lo, hi) are
    written; disjoint ranges may be filled concurrently into a shared out
    buffer by different threads since every output element is independent.
    """
    if inp.ndim != 3:
        raise ShapeError(f"input must be 3-d (h, w, ch), got shape {inp.shape}")
    if inp.shape[2] != params.kernels.shape[2]:
        raise ShapeError(
            f"input has {inp.shape[2]} channels, kernels expect {params.kernels.shape[2]}"
        )
    _check_dtype("input", inp)
    if inp.dtype != params.kernels.dtype:
        raise TypeError(f"input dtype {inp.dtype} does not match kernel dtype {params.kernels.dtype}")
    kh, kw, _, out_ch = params.kernels.shape
    sh, sw = params.stride
    out_h, out_w = conv_out_hw(inp.shape[0], inp.shape[1], kh, kw, sh, sw)
    if out is None:
        out = np.empty((out_h, out_w, out_ch), dtype=inp.dtype)
    elif out.shape != (out_h, out_w, out_ch) or out.dtype != inp.dtype:
        raise ShapeError(f"out buffer must be {(out_h, out_w, out_ch)} {inp.dtype}")
    f_lo, f_hi = (0, out_ch) if channel_range is None else channel_range
    if not 0 <= f_lo <= f_hi <= out_ch:
        raise ValueError(f"channel_range {channel_range} out of bounds for {out_ch} channels")
    _conv_fwd_kernel(inp, params.kernels, params.bias, out, sh, sw, f_lo, f_hi)
    return out


def fc_forward(x, params, out=None, row_range=None):
    """Fully-connected layer y = W x + b on a 1-d input.

    row_range=(lo, hi) restricts computation to output rows [lo, hi); same
    partitioning contract as conv2d_forward.
    """
    if x.ndim != 1:
        raise ShapeError(f"input must be 1-d, got shape {x.shape}")
    if x.shape[0] != params.weights.shape[1]:
        raise ShapeError(
            f"input length {x.shape[0]} does not match weight columns {params.weights.shape[1]}"
        )
    _check_dtype("input", x)
    if x.dtype != params.weights.dtype:
        raise TypeError(f"input dtype {x.dtype} does not match weight dtype {params.weights.dtype}")
    out_dim = params.weights.shape[0]
    if out is None:
        out = np.empty(out_dim, dtype=x.dtype)
    elif out.shape != (out_dim,) or out.dtype != x.dtype:
        raise ShapeError(f"out buffer must be ({out_dim},) {x.dtype}")
    o_lo, o_hi = (0, out_dim) if row_range is None else row_range
    if not 0 <= o_lo <= o_hi <= out_dim:
        raise ValueError(f"row_range {row_range} out of bounds for {out_dim} rows")
    _fc_fwd_kernel(params.weights, x, params.bias, out, o_lo, o_hi)
    return out


def relu(x):
    return np.maximum(x, 0)


def _conv_patches(inp, kh, kw, sh, sw, out_h, out_w):
    # (out_h, out_w, kh, kw, in_ch) sliding view, no copy
    sh_b, sw_b, ch_b = inp.strides
    shape = (out_h, out_w, kh, kw, inp.shape[2])
    strides = (sh_b * sh, sw_b * sw, sh_b, sw_b, ch_b)
    return np.lib.stride_tricks.as_strided(inp, shape=shape, strides=strides)


def conv2d_backward(inp, params, grad_out):
    """Gradients of a conv layer given upstream grad_out (out_h, out_w, out_ch).

    Returns (grad_input, grad_kernels, grad_bias).  No ordering contract:
    correctness is checked against finite differences, so numpy reductions
    are fine here.
    """
    kh, kw, in_ch, out_ch = params.kernels.shape
    sh, sw = params.stride
    out_h, out_w = conv_out_hw(inp.shape[0], inp.shape[1], kh, kw, sh, sw)
    if grad_out.shape != (out_h, out_w, out_ch):
        raise ShapeError(f"grad_out must be {(out_h, out_w, out_ch)}, got {grad_out.shape}")
    patches = _conv_patches(inp, kh, kw, sh, sw, out_h, out_w)
    # grad_kernels[r, c, ch, f] = sum_ij patches[i, j, r, c, ch] * grad_out[i, j, f]
    grad_kernels = np.tensordot(patches, grad_out, axes=([0, 1], [0, 1])).astype(inp.dtype)
    grad_bias = grad_out.sum(axis=(0, 1)).astype(inp.dtype)
    grad_input = np.zeros_like(inp)
    # scatter-add: each output element pulls from one input window
    contrib = np.tensordot(grad_out, params.kernels, axes=([2], [3]))  # (oh, ow, kh, kw, ch)
    for i in range(out_h):
        for j in range(out_w):
            grad_input[i * sh:i * sh + kh, j * sw:j * sw + kw, :] += contrib[i, j]
    return grad_input, grad_kernels, grad_bias


def fc_backward(x, params, grad_out):
    """Gradients of a fully-connected layer. Returns (grad_input, grad_weights, grad_bias)."""
    if grad_out.shape != (params.weights.shape[0],):
        raise ShapeError(
            f"grad_out must be ({params.weights.shape[0]},), got {grad_out.shape}"
        )
    grad_input = (params.weights.T @ grad_out).astype(x.dtype)
    grad_weights = np.outer(grad_out, x).astype(x.dtype)
    grad_bias = grad_out.astype(x.dtype, copy=True)
    return grad_input, grad_weights, grad_bias
