"""Batched neighbor-list construction with fixed-capacity padded output.

Two strategies produce identical pair sets: a brute-force double loop,
best below ten thousand atoms, and a cell list (hash-and-sort) that
scales linearly. Output arrays always have ``capacity`` rows; slots at
index ``count`` and beyond are sentinels holding -1 pair indices. One
grid spans all batch codes and candidates from foreign batches are
rejected at distance-check time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _neighbor_kernels as _kernels
from ._ops import segment_sum
from .errors import CapacityError, NumericError, ValidationError
from .system import Box, System, _freeze_owned

#: Atom count at which strategy "auto" switches from brute force to cells.
AUTO_STRATEGY_THRESHOLD = 10_000

_STRATEGIES = ("brute", "cell", "auto")


@dataclass(frozen=True)
class NeighborSpec:
    """Construction parameters for a neighbor list.

    ``capacity`` bounds the number of emitted pairs (directed pairs when
    ``full_list`` is set). ``cutoff_lower < d <= cutoff_upper`` selects
    pairs; self loops, when requested, bypass the distance window.
    """

    cutoff_upper: float
    capacity: int
    cutoff_lower: float = 0.0
    strategy: str = "auto"
    include_self_loops: bool = False
    full_list: bool = False
    deterministic: bool = True

    def __post_init__(self):
        if not 0.0 <= self.cutoff_lower < self.cutoff_upper:
            raise ValidationError(
                "cutoffs must satisfy 0 <= cutoff_lower < cutoff_upper, got "
                f"{self.cutoff_lower} and {self.cutoff_upper}"
            )
        if self.capacity < 1:
            raise ValidationError("capacity must be >= 1")
        if self.strategy not in _STRATEGIES:
            raise ValidationError(
                f"unknown strategy {self.strategy!r}, expected one of {_STRATEGIES}"
            )


@dataclass(frozen=True)
class NeighborList:
    """Padded pair set; rows [0, count) are valid, the rest are sentinels.

    ``deltas`` holds minimum-image displacements r_i - r_j and matches
    ``distances`` in norm. The originating spec travels along so
    consumers can check cutoffs and list orientation.
    """

    pairs: np.ndarray
    deltas: np.ndarray
    distances: np.ndarray
    count: int
    n_atoms: int
    spec: NeighborSpec
    notes: tuple = ()

    @property
    def capacity(self) -> int:
        return self.pairs.shape[0]

    def valid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views of the populated slots: (pairs, deltas, distances)."""
        c = self.count
        return self.pairs[:c], self.deltas[:c], self.distances[:c]


def capacity_heuristic(n_atoms: int, max_num_neighbors: int) -> int:
    """Default pair budget, the usual atoms-times-max-neighbors bound."""
    return max(1, int(n_atoms) * int(max_num_neighbors))


def _box_args(box: Optional[Box]) -> tuple[int, np.ndarray]:
    if box is None or not box.periodic:
        return _kernels.KIND_NONE, np.eye(3)
    kind = (
        _kernels.KIND_ORTHORHOMBIC
        if box.kind == "orthorhombic"
        else _kernels.KIND_TRICLINIC
    )
    return kind, np.asarray(box.vectors, dtype=np.float64)


def _periodic_grid(system: System, cutoff: float):
    """Cell assignment in fractional space; None if fewer than 3 cells fit."""
    box = system.box
    widths = box.perpendicular_widths()
    dims = np.floor(widths / cutoff).astype(np.int64)
    if np.any(dims < 3):
        return None
    frac = system.positions @ np.linalg.inv(box.vectors)
    frac = frac - np.floor(frac)
    coords = (np.floor(frac * dims).astype(np.int64)) % dims
    return coords, dims, True


def _open_grid(system: System, cutoff: float):
    """Cartesian grid over the bounding box, inflated by the cutoff."""
    pos = system.positions
    low = pos.min(axis=0) - 0.5 * cutoff
    extent = pos.max(axis=0) - low + 0.5 * cutoff
    dims = np.maximum(np.floor(extent / cutoff).astype(np.int64), 1)
    edge = extent / dims
    coords = np.clip(np.floor((pos - low) / edge).astype(np.int64), 0, dims - 1)
    return coords, dims, False


def _sort_cells(coords: np.ndarray, dims: np.ndarray):
    flat = (coords[:, 0] * dims[1] + coords[:, 1]) * dims[2] + coords[:, 2]
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=int(dims[0] * dims[1] * dims[2]))
    start = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    return order.astype(np.int64), start


def build_neighbor_list(system: System, spec: NeighborSpec) -> NeighborList:
    """Enumerate all in-batch pairs within the distance window.

    Raises CapacityError carrying the required slot count when the pairs
    do not fit, and ValidationError when the cutoff exceeds half the
    smallest perpendicular box width. An infeasible cell grid falls back
    to brute force with a note recorded on the result.
    """
    n = system.n_atoms
    box = system.box
    if box is not None and box.periodic:
        half_width = box.min_width() / 2.0
        if spec.cutoff_upper > half_width:
            raise ValidationError(
                f"cutoff too large for box: {spec.cutoff_upper} exceeds half the "
                f"minimum perpendicular width {half_width}"
            )
    kind, boxmat = _box_args(box)

    strategy = spec.strategy
    if strategy == "auto":
        strategy = "brute" if n < AUTO_STRATEGY_THRESHOLD else "cell"
    notes = []
    grid = None
    if strategy == "cell":
        if box is not None and box.periodic:
            grid = _periodic_grid(system, spec.cutoff_upper)
        else:
            grid = _open_grid(system, spec.cutoff_upper)
        if grid is None:
            notes.append(
                "cell strategy needs at least 3 cells per periodic dimension; "
                "fell back to brute force"
            )
            strategy = "brute"

    capacity = spec.capacity
    pairs = np.full((capacity, 2), -1, dtype=np.int64)
    deltas = np.zeros((capacity, 3), dtype=np.float64)
    dists = np.zeros(capacity, dtype=np.float64)
    wrapped = kind != _kernels.KIND_NONE
    if strategy == "brute":
        if wrapped:
            found = _kernels.brute_half_wrapped(
                system.positions, system.batch, boxmat,
                spec.cutoff_lower, spec.cutoff_upper, pairs, deltas, dists,
            )
        else:
            found = _kernels.brute_half_open(
                system.positions, system.batch,
                spec.cutoff_lower, spec.cutoff_upper, pairs, deltas, dists,
            )
    else:
        coords, dims, periodic = grid
        order, start = _sort_cells(coords, dims)
        if periodic:
            found = _kernels.cell_half_wrapped(
                system.positions, system.batch, boxmat,
                spec.cutoff_lower, spec.cutoff_upper,
                coords, dims, order, start, pairs, deltas, dists,
            )
        else:
            found = _kernels.cell_half_open(
                system.positions, system.batch,
                spec.cutoff_lower, spec.cutoff_upper,
                coords, dims, order, start, pairs, deltas, dists,
            )

    n_loops = n if spec.include_self_loops else 0
    total = (2 * found if spec.full_list else found) + n_loops
    if total > capacity:
        raise CapacityError(required=total, capacity=capacity)

    if spec.full_list and found:
        pairs[found : 2 * found] = pairs[:found, ::-1]
        deltas[found : 2 * found] = -deltas[:found]
        dists[found : 2 * found] = dists[:found]
    if n_loops:
        loop_idx = np.arange(n, dtype=np.int64)
        loop_base = total - n_loops
        pairs[loop_base:total, 0] = loop_idx
        pairs[loop_base:total, 1] = loop_idx
        deltas[loop_base:total] = 0.0
        dists[loop_base:total] = 0.0

    if spec.deterministic and total > 1:
        key = np.lexsort((pairs[:total, 1], pairs[:total, 0]))
        pairs[:total] = pairs[:total][key]
        deltas[:total] = deltas[:total][key]
        dists[:total] = dists[:total][key]

    return NeighborList(
        pairs=_freeze_owned(pairs),
        deltas=_freeze_owned(deltas),
        distances=_freeze_owned(dists),
        count=int(total),
        n_atoms=n,
        spec=spec,
        notes=tuple(notes),
    )


def build_with_auto_capacity(
    system: System, spec: NeighborSpec, max_doublings: int = 32
) -> NeighborList:
    """Build, doubling capacity on overflow until the pairs fit."""
    for _ in range(max_doublings):
        try:
            return build_neighbor_list(system, spec)
        except CapacityError as err:
            spec = replace(spec, capacity=max(err.required, 2 * spec.capacity))
    raise CapacityError(required=spec.capacity * 2, capacity=spec.capacity)


def canonicalize(nlist: NeighborList) -> tuple[np.ndarray, np.ndarray]:
    """Strategy-independent form: unordered pairs as sorted (i, j) rows.

    Sentinels are dropped, reversed duplicates collapse onto one row, and
    rows come back lexicographically sorted together with their
    distances.
    """
    pairs, _, dists = nlist.valid()
    swapped = np.sort(pairs, axis=1)
    unique, first = np.unique(swapped, axis=0, return_index=True)
    return unique, dists[first]


def as_full_list(nlist: NeighborList) -> NeighborList:
    """Directed view: every non-loop pair appears in both orientations."""
    if nlist.spec.full_list:
        return nlist
    pairs, deltas, dists = nlist.valid()
    loops = pairs[:, 0] == pairs[:, 1]
    pair_blocks = [pairs, pairs[~loops][:, ::-1]]
    delta_blocks = [deltas, -deltas[~loops]]
    dist_blocks = [dists, dists[~loops]]
    valid_p = np.concatenate(pair_blocks, axis=0)
    valid_d = np.concatenate(delta_blocks, axis=0)
    valid_r = np.concatenate(dist_blocks, axis=0)
    if nlist.spec.deterministic and valid_p.shape[0] > 1:
        key = np.lexsort((valid_p[:, 1], valid_p[:, 0]))
        valid_p, valid_d, valid_r = valid_p[key], valid_d[key], valid_r[key]
    capacity = 2 * nlist.capacity
    total = valid_p.shape[0]
    out_pairs = np.full((capacity, 2), -1, dtype=np.int64)
    out_deltas = np.zeros((capacity, 3))
    out_dists = np.zeros(capacity)
    out_pairs[:total] = valid_p
    out_deltas[:total] = valid_d
    out_dists[:total] = valid_r
    return NeighborList(
        pairs=_freeze_owned(out_pairs),
        deltas=_freeze_owned(out_deltas),
        distances=_freeze_owned(out_dists),
        count=total,
        n_atoms=nlist.n_atoms,
        spec=replace(nlist.spec, full_list=True, capacity=capacity),
        notes=nlist.notes,
    )


def as_half_list(nlist: NeighborList) -> NeighborList:
    """Undirected view (i < j); self loops are kept once."""
    if not nlist.spec.full_list:
        return nlist
    pairs, deltas, dists = nlist.valid()
    keep = pairs[:, 0] <= pairs[:, 1]
    valid_p, valid_d, valid_r = pairs[keep], deltas[keep], dists[keep]
    capacity = nlist.capacity
    total = valid_p.shape[0]
    out_pairs = np.full((capacity, 2), -1, dtype=np.int64)
    out_deltas = np.zeros((capacity, 3))
    out_dists = np.zeros(capacity)
    out_pairs[:total] = valid_p
    out_deltas[:total] = valid_d
    out_dists[:total] = valid_r
    return NeighborList(
        pairs=_freeze_owned(out_pairs),
        deltas=_freeze_owned(out_deltas),
        distances=_freeze_owned(out_dists),
        count=total,
        n_atoms=nlist.n_atoms,
        spec=replace(nlist.spec, full_list=False),
        notes=nlist.notes,
    )


def _edge_gradient_terms(nlist: NeighborList, d_grad: np.ndarray):
    d_grad = np.asarray(d_grad, dtype=np.float64)
    if d_grad.shape not in ((nlist.capacity,), (nlist.count,)):
        raise ValidationError(
            f"d_grad must have capacity ({nlist.capacity}) or count "
            f"({nlist.count}) entries, got {d_grad.shape}"
        )
    pairs, deltas, dists = nlist.valid()
    g = d_grad[: nlist.count]
    loops = pairs[:, 0] == pairs[:, 1]
    bad = ~loops & (dists == 0.0)
    if np.any(bad):
        i, j = pairs[bad][0]
        raise NumericError(
            f"zero-distance pair ({i}, {j}) has no defined distance direction"
        )
    safe = np.where(loops, 1.0, dists)
    unit = deltas / safe[:, None]
    unit[loops] = 0.0
    return pairs, g, unit, safe, loops


def distance_pullback(nlist: NeighborList, d_grad: np.ndarray) -> np.ndarray:
    """Accumulate d(sum_k d_grad_k * d_k)/d(positions).

    The distance derivative of pair (i, j) is +delta/d at i and -delta/d
    at j; self loops contribute nothing. Sentinel slots are ignored.
    """
    pairs, g, unit, _, _ = _edge_gradient_terms(nlist, d_grad)
    contrib = g[:, None] * unit
    grad = segment_sum(contrib, pairs[:, 0], nlist.n_atoms)
    grad -= segment_sum(contrib, pairs[:, 1], nlist.n_atoms)
    return grad


def distance_pullback_second(
    nlist: NeighborList, d_grad: np.ndarray, position_tangent: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Directional derivative of distance_pullback along a position tangent.

    Uses the analytic pair Hessian (I - u u^T)/d per edge. Also returns
    the distance tangents u . (t_i - t_j), zero in sentinel slots.
    """
    position_tangent = np.asarray(position_tangent, dtype=np.float64)
    if position_tangent.shape != (nlist.n_atoms, 3):
        raise ValidationError(
            f"position tangent must have shape ({nlist.n_atoms}, 3)"
        )
    pairs, g, unit, safe, loops = _edge_gradient_terms(nlist, d_grad)
    tdiff = position_tangent[pairs[:, 0]] - position_tangent[pairs[:, 1]]
    ddot = np.einsum("ij,ij->i", unit, tdiff)
    hvp = g[:, None] * (tdiff - unit * ddot[:, None]) / safe[:, None]
    hvp[loops] = 0.0
    grad = segment_sum(hvp, pairs[:, 0], nlist.n_atoms)
    grad -= segment_sum(hvp, pairs[:, 1], nlist.n_atoms)
    distance_tangent = np.zeros(nlist.capacity)
    distance_tangent[: nlist.count] = np.where(loops, 0.0, ddot)
    return grad, distance_tangent
