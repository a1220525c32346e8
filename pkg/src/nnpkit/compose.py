"""Composition of a learned potential with a stack of physical priors.

A composed potential evaluates as the sum of its parts: per-sample
energies add, per-atom energies add, and forces add. The network part
consumes a full (directed) neighbor list while pair priors reduce the
same list to its undirected half, so one list serves both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ValidationError
from .graphnet import GraphPotential
from .neighbors import (
    NeighborList,
    NeighborSpec,
    as_full_list,
    build_with_auto_capacity,
    capacity_heuristic,
)
from .priors import PriorStack, evaluate_prior_stack
from .system import EnergyForces, System, combine_energy_forces


@dataclass(frozen=True)
class ComposedPotential:
    """A graph potential, a prior stack, or both, plus the force switch.

    ``cutoff`` only matters for prior-only potentials, where no network
    config is available to size the neighbor search.
    """

    network: Optional[GraphPotential] = None
    priors: PriorStack = field(default_factory=PriorStack)
    derivative: bool = True
    cutoff: Optional[float] = None

    def __post_init__(self):
        if self.network is None and len(self.priors) == 0:
            raise ValidationError(
                "empty potential: provide a network, priors, or both"
            )

    @property
    def needs_neighbors(self) -> bool:
        return self.network is not None or self.priors.needs_neighbors

    def resolve_cutoff(self) -> float:
        if self.network is not None:
            return self.network.config.cutoff_upper
        if self.cutoff is not None:
            return float(self.cutoff)
        raise ValidationError(
            "prior-only potential needs an explicit cutoff to build neighbor lists"
        )

    def neighbor_spec(self, n_atoms: int, max_num_neighbors: int = 64) -> NeighborSpec:
        """Spec sized for this potential; directed when a network is present."""
        full = self.network is not None
        lower = self.network.config.cutoff_lower if self.network else 0.0
        capacity = capacity_heuristic(n_atoms, max_num_neighbors)
        if full:
            capacity *= 2
        return NeighborSpec(
            cutoff_upper=self.resolve_cutoff(),
            cutoff_lower=lower,
            capacity=capacity,
            full_list=full,
        )


def evaluate(
    potential: ComposedPotential,
    system: System,
    neighbors: Optional[NeighborList],
) -> EnergyForces:
    """Energy (and forces when requested) of the composed potential.

    The neighbor list must match the network cutoffs when a network is
    present; it may be None for stacks whose terms need no neighbors.
    """
    if potential.needs_neighbors and neighbors is None:
        raise ValidationError("this potential needs a neighbor list")
    parts = []
    if potential.network is not None:
        full = as_full_list(neighbors)
        parts.append(
            potential.network.evaluate(system, full, forces=potential.derivative)
        )
    if len(potential.priors) > 0:
        prior_part = evaluate_prior_stack(system, neighbors, potential.priors)
        if not potential.derivative:
            prior_part = EnergyForces(
                energy=prior_part.energy,
                forces=None,
                per_atom_energy=prior_part.per_atom_energy,
            )
        parts.append(prior_part)
    return combine_energy_forces(parts)


def evaluate_auto(
    potential: ComposedPotential,
    system: System,
    max_num_neighbors: int = 64,
) -> EnergyForces:
    """Convenience wrapper that builds a fitting neighbor list first.

    Capacity starts at the atoms-times-neighbors heuristic and doubles
    on overflow, mirroring how callers are expected to react to the
    capacity error.
    """
    neighbors = None
    if potential.needs_neighbors:
        spec = potential.neighbor_spec(system.n_atoms, max_num_neighbors)
        neighbors = build_with_auto_capacity(system, spec)
    return evaluate(potential, system, neighbors)
