"""Shared helpers: random system generators and independent oracles."""

import numpy as np
import pytest

from nnpkit import Box, build_system

IMAGE_SHIFTS = np.array(
    [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)],
    dtype=np.float64,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_reduced_box(rng, lo=4.0, hi=12.0, kind=None):
    ax, by, cz = rng.uniform(lo, hi, 3)
    kind = kind or rng.choice(["orthorhombic", "triclinic"])
    if kind == "orthorhombic":
        return Box.orthorhombic(ax, by, cz)
    return Box.triclinic(
        [
            [ax, 0.0, 0.0],
            [rng.uniform(-ax / 2, ax / 2), by, 0.0],
            [rng.uniform(-ax / 2, ax / 2), rng.uniform(-by / 2, by / 2), cz],
        ]
    )


def random_batch(rng, n, n_batches):
    """Contiguous batch codes with no empty batches."""
    n_batches = min(n_batches, n)
    cuts = np.sort(rng.choice(np.arange(1, n), size=n_batches - 1, replace=False))
    sizes = np.diff(np.concatenate([[0], cuts, [n]]))
    return np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)


def random_system(rng, n=None, kind=None, n_batches=None, charges=False):
    n = n if n is not None else int(rng.integers(2, 64))
    kind = kind if kind is not None else rng.choice(["none", "orthorhombic", "triclinic"])
    if kind == "none":
        box = None
        pos = rng.uniform(0.0, 9.0, (n, 3))
    else:
        box = random_reduced_box(rng, kind=kind)
        pos = rng.uniform(0.0, 1.0, (n, 3)) @ box.vectors
    batch = random_batch(rng, n, n_batches or int(rng.integers(1, 5)))
    q = rng.uniform(-1.0, 1.0, n) if charges else None
    return build_system(
        pos, rng.choice([1, 6, 8], n), batch=batch, box=box, charges=q
    )


def image_min_distances(positions, box):
    """All-pairs distances, each the exhaustive 27-image minimum."""
    deltas = positions[:, None, :] - positions[None, :, :]
    if box is None:
        return np.linalg.norm(deltas, axis=-1)
    shifts = IMAGE_SHIFTS @ box.vectors
    stacked = deltas[None, :, :, :] + shifts[:, None, None, :]
    return np.sqrt(np.sum(stacked**2, axis=-1)).min(axis=0)


def oracle_pair_set(system, r_lower, r_upper):
    """Reference neighbor enumeration: sorted (i, j) pairs and distances."""
    d = image_min_distances(system.positions, system.box)
    n = system.n_atoms
    i_idx, j_idx = np.triu_indices(n, k=1)
    same = system.batch[i_idx] == system.batch[j_idx]
    window = (d[i_idx, j_idx] > r_lower) & (d[i_idx, j_idx] <= r_upper)
    keep = same & window
    pairs = np.stack([i_idx[keep], j_idx[keep]], axis=1)
    return pairs, d[i_idx[keep], j_idx[keep]]


def central_difference_forces(energy_fn, positions, h=1e-4):
    """Negative central-difference gradient of a scalar energy function."""
    grad = np.zeros_like(positions)
    for a in range(positions.shape[0]):
        for k in range(3):
            plus = positions.copy()
            minus = positions.copy()
            plus[a, k] += h
            minus[a, k] -= h
            grad[a, k] = (energy_fn(plus) - energy_fn(minus)) / (2 * h)
    return -grad


def relative_error(a, b, floor=1e-10):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))


def random_rotation(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
