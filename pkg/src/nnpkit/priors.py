"""Analytic physical energy terms with exact forces.

Four terms are provided: per-element reference energies, switched
Coulomb electrostatics, D2-style pairwise dispersion, and screened
nuclear repulsion. Terms compose through a PriorStack whose evaluation
is the element-wise sum of its members. Pair terms consume half lists;
a full list passed in is reduced internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._ops import segment_sum
from .errors import ValidationError
from .neighbors import NeighborList, NeighborSpec, as_half_list, build_neighbor_list
from .radial import cosine_cutoff, cosine_cutoff_grad
from .system import EnergyForces, System, build_system, zero_energy_forces
from .units import BOHR_RADIUS, COULOMB_CONSTANT, JNM6_PER_MOL_TO_EV_A6

# Dispersion parameters for the elements used throughout: C6 coefficients
# in J nm^6 / mol and van der Waals radii in angstrom, converted to
# eV A^6 below. Standard DFT-D2 reference table values.
_D2_TABLE_JNM6 = {
    1: (0.14, 1.001),   # H
    6: (1.75, 1.452),   # C
    7: (1.23, 1.397),   # N
    8: (0.70, 1.342),   # O
    9: (0.75, 1.287),   # F
    16: (5.57, 1.683),  # S
    17: (5.07, 1.639),  # Cl
}

D2_C6_EV_A6 = {z: c6 * JNM6_PER_MOL_TO_EV_A6 for z, (c6, _) in _D2_TABLE_JNM6.items()}
D2_VDW_RADII = {z: r for z, (_, r) in _D2_TABLE_JNM6.items()}

# Universal screening function coefficients and exponents.
ZBL_COEFFS = np.array([0.18175, 0.50986, 0.28022, 0.02817])
ZBL_EXPONENTS = np.array([3.19980, 0.94229, 0.40290, 0.20162])
ZBL_SCREENING_PREFACTOR = 0.8854 * BOHR_RADIUS


class PriorTerm:
    """Base class for physical energy terms.

    Subclasses implement ``evaluate`` returning per-sample energies,
    per-atom energies, and analytic forces. Terms are immutable and
    evaluation is pure.
    """

    needs_neighbors = True

    def evaluate(self, system: System, neighbors: Optional[NeighborList]) -> EnergyForces:
        raise NotImplementedError


def _pair_term_energy_forces(
    system: System,
    neighbors: NeighborList,
    pair_fn: Callable[[np.ndarray, np.ndarray, float], tuple[np.ndarray, np.ndarray]],
) -> EnergyForces:
    """Assemble an EnergyForces from per-pair energies and d(E)/d(distance).

    ``pair_fn(pairs, distances, cutoff_upper)`` returns the pair energies
    and their distance derivatives. Pair energy is split evenly between
    the endpoints; forces follow the minimum-image direction so action
    equals reaction exactly.
    """
    half = as_half_list(neighbors)
    pairs, deltas, dists = half.valid()
    nonloop = pairs[:, 0] != pairs[:, 1]
    pairs, deltas, dists = pairs[nonloop], deltas[nonloop], dists[nonloop]
    n = system.n_atoms
    if pairs.shape[0] == 0:
        return zero_energy_forces(system)
    energy_pair, de_dd = pair_fn(pairs, dists, half.spec.cutoff_upper)
    i, j = pairs[:, 0], pairs[:, 1]
    per_atom = 0.5 * (segment_sum(energy_pair, i, n) + segment_sum(energy_pair, j, n))
    energy = segment_sum(per_atom, system.batch, system.n_samples)
    pair_force = -de_dd[:, None] * (deltas / dists[:, None])
    forces = segment_sum(pair_force, i, n) - segment_sum(pair_force, j, n)
    return EnergyForces(energy=energy, forces=forces, per_atom_energy=per_atom)


@dataclass(frozen=True)
class Atomref(PriorTerm):
    """Per-element reference energies; zero forces.

    When ``learnable`` is set, the trainer treats the table as part of
    the optimized parameters, initialized from the values given here.
    """

    table: dict
    learnable: bool = False
    needs_neighbors = False

    def evaluate(self, system: System, neighbors=None) -> EnergyForces:
        per_atom = np.empty(system.n_atoms)
        for idx, z in enumerate(system.species):
            value = self.table.get(int(z))
            if value is None:
                raise ValidationError(f"missing reference for element {int(z)}")
            per_atom[idx] = value
        energy = segment_sum(per_atom, system.batch, system.n_samples)
        return EnergyForces(
            energy=energy,
            forces=np.zeros((system.n_atoms, 3)),
            per_atom_energy=per_atom,
        )


@dataclass(frozen=True)
class Coulomb(PriorTerm):
    """Electrostatics with a short-range cosine switch.

    The pair energy is k q_i q_j S(d) / d where S ramps from 0 at d = 0
    to 1 at the switch radius, suppressing the short-distance
    singularity. Beyond the switch the interaction is plain Coulomb.
    """

    switch_radius: float

    def __post_init__(self):
        if self.switch_radius <= 0:
            raise ValidationError("switch radius must be positive")

    def evaluate(self, system: System, neighbors: NeighborList) -> EnergyForces:
        if system.charges is None:
            raise ValidationError(
                "missing charges: the electrostatic prior needs per-atom "
                "partial charges on the system"
            )
        charges = system.charges
        r_s = self.switch_radius

        def pair_fn(pairs, d, _cutoff):
            qq = COULOMB_CONSTANT * charges[pairs[:, 0]] * charges[pairs[:, 1]]
            inside = d < r_s
            phase = np.pi * d / r_s
            switch = np.where(inside, 0.5 * (1.0 - np.cos(phase)), 1.0)
            dswitch = np.where(inside, 0.5 * np.pi / r_s * np.sin(phase), 0.0)
            energy = qq * switch / d
            de_dd = qq * (dswitch / d - switch / d**2)
            return energy, de_dd

        return _pair_term_energy_forces(system, neighbors, pair_fn)


@dataclass(frozen=True)
class ZBL(PriorTerm):
    """Screened nuclear repulsion between all pairs.

    Uses the universal four-exponential screening function of the
    stopping-power literature with screening length
    0.8854 a0 / (Z_i^0.23 + Z_j^0.23), multiplied by the cosine envelope
    at the neighbor cutoff so the term vanishes smoothly there.
    """

    def evaluate(self, system: System, neighbors: NeighborList) -> EnergyForces:
        if np.any(system.species <= 0):
            raise ValidationError(
                "screened repulsion requires positive atomic numbers"
            )
        species = system.species.astype(np.float64)

        def pair_fn(pairs, d, cutoff):
            z_i = species[pairs[:, 0]]
            z_j = species[pairs[:, 1]]
            a = ZBL_SCREENING_PREFACTOR / (z_i**0.23 + z_j**0.23)
            x = d / a
            terms = ZBL_COEFFS * np.exp(-ZBL_EXPONENTS * x[:, None])
            screen = terms.sum(axis=1)
            dscreen = -(terms * ZBL_EXPONENTS).sum(axis=1) / a
            bare = COULOMB_CONSTANT * z_i * z_j / d
            envelope = cosine_cutoff(d, 0.0, cutoff)
            denvelope = cosine_cutoff_grad(d, 0.0, cutoff)
            energy = bare * screen * envelope
            de_dd = (
                -bare / d * screen * envelope
                + bare * dscreen * envelope
                + bare * screen * denvelope
            )
            return energy, de_dd

        return _pair_term_energy_forces(system, neighbors, pair_fn)


@dataclass(frozen=True)
class D2Dispersion(PriorTerm):
    """Pairwise -C6/d^6 dispersion with sigmoid damping.

    C6 coefficients combine geometrically; the damping turns the term
    off below the summed van der Waals radii. The shipped element table
    covers H, C, N, O, F, S, and Cl; pass explicit tables for anything
    else. The cosine envelope enforces continuity at the cutoff.
    """

    s6: float = 1.0
    d_steep: float = 20.0
    c6_table: dict = field(default_factory=lambda: dict(D2_C6_EV_A6))
    radii_table: dict = field(default_factory=lambda: dict(D2_VDW_RADII))

    def __post_init__(self):
        if self.s6 <= 0:
            raise ValidationError("dispersion scale s6 must be positive")

    def _lookup(self, species: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c6 = np.empty(species.size)
        radii = np.empty(species.size)
        for idx, z in enumerate(species):
            z = int(z)
            if z not in self.c6_table or z not in self.radii_table:
                raise ValidationError(
                    f"element {z} outside the dispersion parameter table"
                )
            c6[idx] = self.c6_table[z]
            radii[idx] = self.radii_table[z]
        return c6, radii

    def evaluate(self, system: System, neighbors: NeighborList) -> EnergyForces:
        c6_z, radii_z = self._lookup(system.species)

        def pair_fn(pairs, d, cutoff):
            c6 = np.sqrt(c6_z[pairs[:, 0]] * c6_z[pairs[:, 1]])
            r_sum = radii_z[pairs[:, 0]] + radii_z[pairs[:, 1]]
            arg = self.d_steep * (d / r_sum - 1.0)
            damp = np.empty_like(d)
            pos = arg >= 0
            damp[pos] = 1.0 / (1.0 + np.exp(-arg[pos]))
            ex = np.exp(arg[~pos])
            damp[~pos] = ex / (1.0 + ex)
            ddamp = damp * (1.0 - damp) * self.d_steep / r_sum
            inv6 = d**-6
            envelope = cosine_cutoff(d, 0.0, cutoff)
            denvelope = cosine_cutoff_grad(d, 0.0, cutoff)
            energy = -self.s6 * c6 * inv6 * damp * envelope
            de_dd = -self.s6 * c6 * (
                -6.0 * inv6 / d * damp * envelope
                + inv6 * ddamp * envelope
                + inv6 * damp * denvelope
            )
            return energy, de_dd

        return _pair_term_energy_forces(system, neighbors, pair_fn)


@dataclass(frozen=True)
class PriorStack:
    """Ordered collection of prior terms evaluated as a sum."""

    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def needs_neighbors(self) -> bool:
        return any(term.needs_neighbors for term in self.terms)

    def learnable_atomref(self) -> Optional[Atomref]:
        for term in self.terms:
            if isinstance(term, Atomref) and term.learnable:
                return term
        return None


def evaluate_prior_stack(
    system: System, neighbors: Optional[NeighborList], stack: PriorStack
) -> EnergyForces:
    """Element-wise sum of all term outputs; empty stacks give zeros."""
    total = zero_energy_forces(system)
    for term in stack.terms:
        part = term.evaluate(system, neighbors)
        total = EnergyForces(
            energy=total.energy + part.energy,
            forces=total.forces + part.forces,
            per_atom_energy=total.per_atom_energy + part.per_atom_energy,
        )
    return total


@dataclass(frozen=True)
class PairEnergyProfile:
    """Energy of a single dimer scanned over a distance grid."""

    distances: np.ndarray
    energies: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        e = np.asarray(self.energies, dtype=np.float64)
        if d.ndim != 1 or d.shape != e.shape:
            raise ValidationError("profile arrays must be matching 1-D")
        if d.size and np.any(np.diff(d) <= 0):
            raise ValidationError("profile distances must be strictly increasing")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "energies", e)

    def to_csv(self) -> str:
        lines = ["distance_angstrom,energy_ev"]
        for d, e in zip(self.distances, self.energies):
            lines.append(f"{float(d)!r},{float(e)!r}")
        return "\n".join(lines) + "\n"


def dimer_scan(
    term: PriorTerm,
    z_i: int,
    z_j: int,
    distances: np.ndarray,
    q_i: Optional[float] = None,
    q_j: Optional[float] = None,
    cutoff_upper: Optional[float] = None,
) -> PairEnergyProfile:
    """Single-pair energy curve for one term over a distance grid.

    The neighbor cutoff defaults to the last grid point, which also
    bounds the grid. Distances must be strictly increasing and positive.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if distances.ndim != 1 or distances.size == 0:
        raise ValidationError("distance grid must be a non-empty 1-D array")
    if np.any(distances <= 0):
        raise ValidationError("distance grid must be strictly positive")
    if np.any(np.diff(distances) <= 0):
        raise ValidationError("distance grid must be strictly increasing")
    cutoff = float(cutoff_upper) if cutoff_upper is not None else float(distances[-1])
    if distances[-1] > cutoff:
        raise ValidationError("distance grid extends past the cutoff")
    charges = None
    if q_i is not None or q_j is not None:
        charges = np.array([q_i or 0.0, q_j or 0.0])
    spec = NeighborSpec(cutoff_upper=cutoff, capacity=2, strategy="brute")
    energies = np.empty_like(distances)
    for idx, d in enumerate(distances):
        system = build_system(
            positions=np.array([[0.0, 0.0, 0.0], [d, 0.0, 0.0]]),
            species=np.array([z_i, z_j]),
            charges=charges,
        )
        neighbors = build_neighbor_list(system, spec)
        energies[idx] = term.evaluate(system, neighbors).energy[0]
    return PairEnergyProfile(distances=distances, energies=energies)
