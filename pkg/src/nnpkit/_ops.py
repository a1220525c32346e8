"""Small numeric helpers shared by the potential modules."""

import numpy as np


def segment_sum(values: np.ndarray, index: np.ndarray, n_segments: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n_segments`` buckets given by ``index``.

    Works for 1-D and 2-D values; uses bincount on a flattened index so
    the accumulation stays in C and the summation order is the row order.
    """
    values = np.asarray(values, dtype=np.float64)
    index = np.asarray(index, dtype=np.int64)
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=n_segments)
    n_cols = values.shape[1]
    flat_index = (index[:, None] * n_cols + np.arange(n_cols)[None, :]).ravel()
    out = np.bincount(flat_index, weights=values.ravel(), minlength=n_segments * n_cols)
    return out.reshape(n_segments, n_cols)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))
