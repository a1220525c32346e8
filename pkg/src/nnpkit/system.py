"""Core domain types: simulation boxes, atomic systems, energy/force results.

Everything here is immutable after construction. Positions are in
angstrom, energies in eV, forces in eV/angstrom, charges in elementary
charges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError

BOX_KINDS = ("none", "orthorhombic", "triclinic")


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.flags.writeable = False
    return out


def _freeze_owned(array: np.ndarray) -> np.ndarray:
    """Freeze without copying; only for arrays the caller just allocated."""
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Box:
    """Periodic cell in reduced form, rows of ``vectors`` are a, b, c.

    Reduced form means a = (ax, 0, 0), b = (bx, by, 0), c = (cx, cy, cz)
    with positive diagonal and |bx| <= ax/2, |cx| <= ax/2, |cy| <= by/2.
    Kind "none" marks an open (non-periodic) system.
    """

    kind: str
    vectors: np.ndarray

    def __post_init__(self):
        if self.kind not in BOX_KINDS:
            raise ValidationError(f"unknown box kind {self.kind!r}")
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.shape != (3, 3):
            raise ValidationError("box vectors must be a 3x3 matrix")
        if not np.all(np.isfinite(vectors)):
            raise ValidationError("box vectors must be finite")
        object.__setattr__(self, "vectors", _frozen(vectors))
        if self.kind == "none":
            return
        ax, by, cz = vectors[0, 0], vectors[1, 1], vectors[2, 2]
        upper = vectors[np.triu_indices(3, k=1)]
        if np.any(upper != 0.0):
            raise ValidationError("box vectors must be lower triangular")
        if min(ax, by, cz) <= 0.0:
            raise ValidationError("box diagonal entries must be positive")
        if self.kind == "orthorhombic":
            lower = vectors[np.tril_indices(3, k=-1)]
            if np.any(lower != 0.0):
                raise ValidationError(
                    "orthorhombic box must have zero off-diagonal entries"
                )
        else:
            bx, cx, cy = vectors[1, 0], vectors[2, 0], vectors[2, 1]
            if abs(bx) > ax / 2 or abs(cx) > ax / 2 or abs(cy) > by / 2:
                raise ValidationError(
                    "box not reduced: tilt components exceed half box lengths"
                )

    @classmethod
    def orthorhombic(cls, lx: float, ly: float, lz: float) -> "Box":
        return cls("orthorhombic", np.diag([lx, ly, lz]).astype(np.float64))

    @classmethod
    def cubic(cls, edge: float) -> "Box":
        return cls.orthorhombic(edge, edge, edge)

    @classmethod
    def triclinic(cls, vectors: np.ndarray) -> "Box":
        return cls("triclinic", np.asarray(vectors, dtype=np.float64))

    @property
    def periodic(self) -> bool:
        return self.kind != "none"

    def volume(self) -> float:
        return float(abs(np.linalg.det(self.vectors)))

    def perpendicular_widths(self) -> np.ndarray:
        """Distance between opposite faces, per lattice direction."""
        a, b, c = self.vectors
        volume = self.volume()
        return np.array(
            [
                volume / np.linalg.norm(np.cross(b, c)),
                volume / np.linalg.norm(np.cross(a, c)),
                volume / np.linalg.norm(np.cross(a, b)),
            ]
        )

    def min_width(self) -> float:
        return float(self.perpendicular_widths().min())


def _reduce_sequential(delta: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Wrap displacements by subtracting rounded lattice multiples, c then b then a."""
    out = np.array(delta, dtype=np.float64, copy=True)
    for axis in (2, 1, 0):
        shift = np.rint(out[..., axis] / vectors[axis, axis])
        out -= shift[..., None] * vectors[axis]
    return out


def minimum_image(delta: np.ndarray, box: Optional[Box]) -> np.ndarray:
    """Displacement of minimum norm among all periodic images of ``delta``.

    Accepts a single 3-vector or an (..., 3) array. For kind "none" (or
    ``box=None``) the input is returned unchanged. Periodic kinds first
    apply the sequential staircase reduction, which is already exact for
    any displacement shorter than half the minimum perpendicular box
    width; a bounded lattice enumeration then guarantees the global
    minimum for arbitrary inputs. Any nonzero lattice vector with k-th
    coefficient n has norm at least |n| times the k-th perpendicular
    width, so shifts beyond twice the reduced norm over that width
    cannot improve; for well-shaped boxes this is the usual 27-image
    check.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if box is None or not box.periodic:
        return delta.copy()
    vectors = box.vectors
    base = _reduce_sequential(delta, vectors)
    out = base
    best_norm = np.einsum("...i,...i->...", base, base)
    widths = box.perpendicular_widths()
    reach = np.floor(
        2.0 * np.sqrt(float(np.max(best_norm))) / widths + 1e-9
    ).astype(int)
    for i in range(-reach[0], reach[0] + 1):
        for j in range(-reach[1], reach[1] + 1):
            for k in range(-reach[2], reach[2] + 1):
                if i == j == k == 0:
                    continue
                shift = i * vectors[0] + j * vectors[1] + k * vectors[2]
                candidate = base + shift
                norm = np.einsum("...i,...i->...", candidate, candidate)
                better = norm < best_norm
                if np.any(better):
                    out = np.where(better[..., None], candidate, out)
                    best_norm = np.where(better, norm, best_norm)
    return out


@dataclass(frozen=True)
class System:
    """A batch of atomic samples sharing one coordinate array.

    ``batch`` holds the sample index of each atom and must be a
    contiguous non-decreasing sequence starting at zero.
    """

    positions: np.ndarray
    species: np.ndarray
    batch: np.ndarray
    box: Optional[Box] = None
    charges: Optional[np.ndarray] = None

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def n_samples(self) -> int:
        return int(self.batch[-1]) + 1

    def sample_sizes(self) -> np.ndarray:
        return np.bincount(self.batch, minlength=self.n_samples)

    def replace_positions(self, positions: np.ndarray) -> "System":
        return System(
            positions=_frozen(np.asarray(positions, dtype=np.float64)),
            species=self.species,
            batch=self.batch,
            box=self.box,
            charges=self.charges,
        )


def build_system(
    positions: np.ndarray,
    species: np.ndarray,
    batch: Optional[np.ndarray] = None,
    box: Optional[Box] = None,
    charges: Optional[np.ndarray] = None,
) -> System:
    """Validate raw arrays and assemble a System.

    A missing ``batch`` defaults to a single sample. Raises
    ValidationError with a distinct message for length mismatches,
    non-contiguous batch codes, and malformed boxes.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValidationError("positions must have shape (N, 3)")
    n = positions.shape[0]
    if n < 1:
        raise ValidationError("system must contain at least one atom")
    if not np.all(np.isfinite(positions)):
        raise ValidationError("positions must be finite")

    species = np.asarray(species, dtype=np.int64)
    if species.shape != (n,):
        raise ValidationError(
            f"length mismatch: {n} positions but {species.shape} species"
        )
    if np.any(species < 0):
        raise ValidationError("species codes must be >= 0")

    if batch is None:
        batch = np.zeros(n, dtype=np.int64)
    else:
        batch = np.asarray(batch, dtype=np.int64)
        if batch.shape != (n,):
            raise ValidationError(
                f"length mismatch: {n} positions but {batch.shape} batch codes"
            )
        if batch[0] != 0 or np.any(np.diff(batch) < 0) or np.any(np.diff(batch) > 1):
            raise ValidationError(
                "non-contiguous batch: codes must be non-decreasing, start at 0, "
                "and skip no values"
            )

    if charges is not None:
        charges = np.asarray(charges, dtype=np.float64)
        if charges.shape != (n,):
            raise ValidationError(
                f"length mismatch: {n} positions but {charges.shape} charges"
            )
        if not np.all(np.isfinite(charges)):
            raise ValidationError("charges must be finite")
        charges = _frozen(charges)

    if box is not None and not isinstance(box, Box):
        raise ValidationError("box must be a Box instance or None")

    return System(
        positions=_frozen(positions),
        species=_frozen(species),
        batch=_frozen(batch),
        box=box,
        charges=charges,
    )


@dataclass(frozen=True)
class EnergyForces:
    """Per-sample energies plus optional forces and per-atom energies."""

    energy: np.ndarray
    forces: Optional[np.ndarray] = None
    per_atom_energy: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(
            self, "energy", _frozen(np.atleast_1d(np.asarray(self.energy, np.float64)))
        )
        if self.forces is not None:
            object.__setattr__(
                self, "forces", _frozen(np.asarray(self.forces, np.float64))
            )
        if self.per_atom_energy is not None:
            object.__setattr__(
                self,
                "per_atom_energy",
                _frozen(np.asarray(self.per_atom_energy, np.float64)),
            )


def zero_energy_forces(system: System, forces: bool = True) -> EnergyForces:
    return EnergyForces(
        energy=np.zeros(system.n_samples),
        forces=np.zeros((system.n_atoms, 3)) if forces else None,
        per_atom_energy=np.zeros(system.n_atoms),
    )


def combine_energy_forces(parts: list[EnergyForces]) -> EnergyForces:
    """Element-wise sum; forces/per-atom terms present only if in all parts."""
    if not parts:
        raise ValidationError("nothing to combine")
    energy = sum(p.energy for p in parts)
    forces = None
    if all(p.forces is not None for p in parts):
        forces = sum(p.forces for p in parts)
    per_atom = None
    if all(p.per_atom_energy is not None for p in parts):
        per_atom = sum(p.per_atom_energy for p in parts)
    return EnergyForces(energy=energy, forces=forces, per_atom_energy=per_atom)
