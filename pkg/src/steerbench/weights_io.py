"""Binary weight file format.

Layout (all integers little-endian):

    magic   4 bytes  b"SBWT"
    version u32      currently 1
    flags   u32      bit 0: seed field is meaningful
    seed    i64      init seed, 0 when absent
    count   u32      number of layer records

    per layer record:
      kind  u8       0 conv, 1 fc, 2 flatten
      conv: kh kw in_ch out_ch sh sw (u32 x6), kernels then bias, raw <f4
      fc:   out_dim in_dim (u32 x2), weights then bias, raw <f4
      flatten: nothing

Arrays are C-order float32.  Loading is strict: wrong magic, unknown version,
unknown kind tag, or implausible dims raise WeightFormatError; short files
raise WeightTruncationError; attaching to a mismatched architecture raises
WeightSpecMismatchError.
"""

import struct

import numpy as np

from .network import WeightStore, check_store_matches, WeightSpecMismatchError
from .tensor_ops import ConvParams, FcParams

MAGIC = b"SBWT"
VERSION = 1
_KIND_CONV, _KIND_FC, _KIND_FLATTEN = 0, 1, 2
_MAX_DIM = 1 << 24  # sanity bound on any single dimension


class WeightFormatError(ValueError):
    """File is not a valid weight file (magic/version/structure)."""


class WeightTruncationError(WeightFormatError):
    """File ended before the declared payload was read."""


def save_weights(store, path):
    dtype = store.dtype
    with open(path, "wb") as f:
        f.write(MAGIC)
        flags = 1 if store.seed is not None else 0
        seed = store.seed if store.seed is not None else 0
        f.write(struct.pack("<IIq", VERSION, flags, seed))
        f.write(struct.pack("<I", len(store.params)))
        for p in store.params:
            if isinstance(p, ConvParams):
                kh, kw, ci, co = p.kernels.shape
                f.write(struct.pack("<BIIIIII", _KIND_CONV, kh, kw, ci, co, *p.stride))
                f.write(np.ascontiguousarray(p.kernels, dtype="<f4").tobytes())
                f.write(np.ascontiguousarray(p.bias, dtype="<f4").tobytes())
            elif isinstance(p, FcParams):
                od, idim = p.weights.shape
                f.write(struct.pack("<BII", _KIND_FC, od, idim))
                f.write(np.ascontiguousarray(p.weights, dtype="<f4").tobytes())
                f.write(np.ascontiguousarray(p.bias, dtype="<f4").tobytes())
            else:
                f.write(struct.pack("<B", _KIND_FLATTEN))
    return dtype  # callers rarely need it; returned for symmetry with load


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise WeightTruncationError(f"file ended reading {what} (wanted {n} bytes, got {len(buf)})")
    return buf


def _read_floats(f, count, what):
    raw = _read_exact(f, count * 4, what)
    return np.frombuffer(raw, dtype="<f4").astype(np.float32, copy=True)


def _check_dims(dims, what):
    for d in dims:
        if d < 1 or d > _MAX_DIM:
            raise WeightFormatError(f"implausible {what} dimension {d}")


def load_weights(path, spec=None):
    """Read a weight file back into a WeightStore.

    When spec is given the result is validated against it and a mismatch
    raises WeightSpecMismatchError.
    """
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise WeightFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, flags, seed = struct.unpack("<IIq", _read_exact(f, 16, "header"))
        if version != VERSION:
            raise WeightFormatError(f"unsupported version {version}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "layer count"))
        if count > 4096:
            raise WeightFormatError(f"implausible layer count {count}")
        params = []
        for idx in range(count):
            (kind,) = struct.unpack("<B", _read_exact(f, 1, f"layer {idx} kind"))
            if kind == _KIND_CONV:
                kh, kw, ci, co, sh, sw = struct.unpack(
                    "<IIIIII", _read_exact(f, 24, f"layer {idx} conv dims"))
                _check_dims((kh, kw, ci, co, sh, sw), f"layer {idx}")
                kernels = _read_floats(f, kh * kw * ci * co, f"layer {idx} kernels")
                bias = _read_floats(f, co, f"layer {idx} bias")
                params.append(ConvParams(kernels.reshape(kh, kw, ci, co), bias, (sh, sw)))
            elif kind == _KIND_FC:
                od, idim = struct.unpack("<II", _read_exact(f, 8, f"layer {idx} fc dims"))
                _check_dims((od, idim), f"layer {idx}")
                weights = _read_floats(f, od * idim, f"layer {idx} weights")
                bias = _read_floats(f, od, f"layer {idx} bias")
                params.append(FcParams(weights.reshape(od, idim), bias))
            elif kind == _KIND_FLATTEN:
                params.append(None)
            else:
                raise WeightFormatError(f"layer {idx}: unknown kind tag {kind}")
        trailing = f.read(1)
        if trailing:
            raise WeightFormatError("trailing bytes after final layer record")
    store = WeightStore(params, seed=seed if flags & 1 else None)
    if spec is not None:
        check_store_matches(store, spec)
    return store
