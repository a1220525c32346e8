"""Radial weighting shared by the graph potential and the pair priors.

The cosine cutoff envelope decays smoothly to zero at the upper cutoff
so every term it multiplies leaves a continuous energy landscape when a
pair crosses the neighbor-list boundary.
"""

import numpy as np


def cosine_cutoff(d: np.ndarray, cutoff_lower: float, cutoff_upper: float) -> np.ndarray:
    """Smooth envelope, 1 well inside the window and 0 at cutoff_upper.

    For a zero lower cutoff this is 0.5 * (cos(pi d / r_u) + 1) below
    r_u. With a positive lower cutoff the window becomes a bump that is
    zero at both ends of [r_l, r_u]. First derivatives vanish at the
    boundaries.
    """
    d = np.asarray(d, dtype=np.float64)
    if cutoff_lower == 0.0:
        out = 0.5 * (np.cos(np.pi * d / cutoff_upper) + 1.0)
        return np.where(d <= cutoff_upper, out, 0.0)
    t = 2.0 * (d - cutoff_lower) / (cutoff_upper - cutoff_lower) + 1.0
    out = 0.5 * (np.cos(np.pi * t) + 1.0)
    inside = (d >= cutoff_lower) & (d <= cutoff_upper)
    return np.where(inside, out, 0.0)


def cosine_cutoff_grad(d: np.ndarray, cutoff_lower: float, cutoff_upper: float) -> np.ndarray:
    """Derivative of the envelope with respect to distance."""
    d = np.asarray(d, dtype=np.float64)
    if cutoff_lower == 0.0:
        out = -0.5 * np.pi / cutoff_upper * np.sin(np.pi * d / cutoff_upper)
        return np.where(d <= cutoff_upper, out, 0.0)
    span = cutoff_upper - cutoff_lower
    t = 2.0 * (d - cutoff_lower) / span + 1.0
    out = -np.pi / span * np.sin(np.pi * t)
    inside = (d >= cutoff_lower) & (d <= cutoff_upper)
    return np.where(inside, out, 0.0)


def expnorm_initial_params(
    num_rbf: int, cutoff_lower: float, cutoff_upper: float
) -> tuple[np.ndarray, np.ndarray]:
    """Standard initialization: means linearly spaced on the folded axis."""
    start = np.exp(-(cutoff_upper - cutoff_lower))
    means = np.linspace(start, 1.0, num_rbf)
    beta = (2.0 / num_rbf * (1.0 - start)) ** -2
    betas = np.full(num_rbf, beta)
    return means, betas


def rbf_expnorm(
    d: np.ndarray, means: np.ndarray, betas: np.ndarray, cutoff_lower: float
) -> np.ndarray:
    """Exponential-normal basis f_k(d) = exp(-beta_k (e^(r_l - d) - mu_k)^2)."""
    d = np.asarray(d, dtype=np.float64)
    u = np.exp(cutoff_lower - d)[..., None]
    return np.exp(-betas * (u - means) ** 2)


def rbf_expnorm_with_grads(
    d: np.ndarray, means: np.ndarray, betas: np.ndarray, cutoff_lower: float
):
    """Basis values plus partials: (f, df/dd, df/dmu, df/dbeta)."""
    d = np.asarray(d, dtype=np.float64)
    u = np.exp(cutoff_lower - d)[..., None]
    diff = u - means
    f = np.exp(-betas * diff**2)
    df_dd = f * 2.0 * betas * diff * u
    df_dmeans = f * 2.0 * betas * diff
    df_dbetas = -f * diff**2
    return f, df_dd, df_dmeans, df_dbetas
