"""Array validation helpers for the estimator API."""

import numpy as np


def check_frame_array(X, input_shape=(66, 200, 3)):
    """Coerce X to (n, *input_shape) float32 in [0, 1]-ish range.

    Accepts stacked frames (n, h, w, c), a single frame (h, w, c), or flat
    rows (n, h*w*c).  uint8 input is scaled by 1/255; float input is used as
    given but must be finite.
    """
    X = np.asarray(X)
    shape = tuple(input_shape)
    flat = int(np.prod(shape))
    if X.ndim == len(shape) and X.shape == shape:
        X = X[None]
    elif X.ndim == 2 and X.shape[1] == flat:
        X = X.reshape((-1,) + shape)
    elif X.ndim == len(shape) + 1 and X.shape[1:] == shape:
        pass
    else:
        raise ValueError(
            f"X must be (n, {', '.join(map(str, shape))}) frames or (n, {flat}) flat rows, "
            f"got shape {X.shape}")
    if X.dtype == np.uint8:
        X = X.astype(np.float32) / np.float32(255.0)
    else:
        X = np.ascontiguousarray(X, dtype=np.float32)
        if not np.isfinite(X).all():
            raise ValueError("X contains non-finite values")
    return X


def check_angle_array(y, n_samples):
    """Coerce y to (n_samples,) float64 finite angles in degrees."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n_samples:
        raise ValueError(f"y has {y.shape[0]} targets for {n_samples} frames")
    if not np.isfinite(y).all():
        raise ValueError("y contains non-finite values")
    return y
