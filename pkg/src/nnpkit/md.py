"""NVT Langevin dynamics in the middle-thermostat splitting.

One step is kick, half drift, Ornstein-Uhlenbeck velocity mixing, half
drift. With zero friction the scheme reduces to the deterministic
kick-drift update. Neighbor lists are rebuilt every step. Gaussian noise
comes from a counter-based generator (Philox) so a seed pins the whole
trajectory bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .compose import ComposedPotential, evaluate_auto
from .data import Frame, write_extxyz
from .elements import atomic_mass
from .errors import NumericError, ValidationError
from .system import System
from .units import BOLTZMANN_EV, FORCE_TO_ACCELERATION, SECONDS_PER_DAY, VELOCITY_SQ_TO_EV


@dataclass(frozen=True)
class Throughput:
    msteps_per_day: float
    ns_per_day: float


def throughput(steps: int, wall_seconds: float, dt_fs: float) -> Throughput:
    """Steps-per-day in millions and the equivalent simulated ns/day.

    One million steps per day at a 1 fs timestep is exactly 1 ns/day;
    the arithmetic below keeps that conversion machine-exact.
    """
    if wall_seconds <= 0:
        raise ValidationError("wall_seconds must be positive")
    msteps = steps * SECONDS_PER_DAY / (wall_seconds * 1e6)
    return Throughput(msteps_per_day=msteps, ns_per_day=msteps * dt_fs)


@dataclass
class MDState:
    """Positions, velocities (angstrom/fs), masses (amu), and the RNG."""

    system: System
    velocities: np.ndarray
    masses: np.ndarray
    time_fs: float = 0.0
    rng: np.random.Generator = None
    seed: int = 0

    def __post_init__(self):
        n = self.system.n_atoms
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if self.velocities.shape != (n, 3):
            raise ValidationError(f"velocities must have shape ({n}, 3)")
        if self.masses.shape != (n,):
            raise ValidationError(f"masses must have shape ({n},)")
        if np.any(self.masses <= 0):
            raise ValidationError("masses must be positive")
        if self.rng is None:
            self.rng = np.random.Generator(np.random.Philox(self.seed))

    def kinetic_energy(self) -> float:
        return 0.5 * VELOCITY_SQ_TO_EV * float(
            np.sum(self.masses[:, None] * self.velocities**2)
        )

    def kinetic_temperature(self) -> float:
        dof = 3 * self.system.n_atoms
        return 2.0 * self.kinetic_energy() / (dof * BOLTZMANN_EV)


def default_masses(species: np.ndarray) -> np.ndarray:
    return np.array([atomic_mass(int(z)) for z in species])


def maxwell_boltzmann_velocities(
    masses: np.ndarray, temperature: float, rng: np.random.Generator
) -> np.ndarray:
    sigma = np.sqrt(BOLTZMANN_EV * temperature * FORCE_TO_ACCELERATION / masses)
    return rng.standard_normal((masses.size, 3)) * sigma[:, None]


def initialize_state(
    system: System,
    temperature: float,
    seed: int = 0,
    masses: Optional[np.ndarray] = None,
    velocities: Optional[np.ndarray] = None,
) -> MDState:
    """Fresh state with element masses and thermal velocities by default."""
    masses = default_masses(system.species) if masses is None else np.asarray(masses)
    rng = np.random.Generator(np.random.Philox(seed))
    if velocities is None:
        velocities = maxwell_boltzmann_velocities(masses, temperature, rng)
    return MDState(
        system=system, velocities=velocities, masses=masses, rng=rng, seed=seed
    )


def _forces(potential: ComposedPotential, system: System, max_num_neighbors: int):
    result = evaluate_auto(potential, system, max_num_neighbors=max_num_neighbors)
    if result.forces is None:
        raise ValidationError("potential was built with derivative=False")
    return result


def langevin_middle_step(
    state: MDState,
    potential: ComposedPotential,
    dt_fs: float,
    temperature: float,
    gamma_per_ps: float,
    max_num_neighbors: int = 64,
) -> MDState:
    """Advance one step; returns a new state sharing the RNG stream."""
    result = _forces(potential, state.system, max_num_neighbors)
    if not np.all(np.isfinite(result.forces)):
        raise NumericError(f"non-finite forces at t = {state.time_fs} fs")
    accel = result.forces * (FORCE_TO_ACCELERATION / state.masses[:, None])
    v = state.velocities + dt_fs * accel
    x = state.system.positions + 0.5 * dt_fs * v
    c1 = np.exp(-gamma_per_ps * dt_fs / 1000.0)
    c2 = np.sqrt(1.0 - c1 * c1)
    if c2 > 0.0:
        sigma = np.sqrt(
            BOLTZMANN_EV * temperature * FORCE_TO_ACCELERATION / state.masses
        )
        noise = state.rng.standard_normal((state.masses.size, 3))
        v = c1 * v + c2 * sigma[:, None] * noise
    x = x + 0.5 * dt_fs * v
    return MDState(
        system=state.system.replace_positions(x),
        velocities=v,
        masses=state.masses,
        time_fs=state.time_fs + dt_fs,
        rng=state.rng,
        seed=state.seed,
    )


@dataclass
class Trajectory:
    """Captured frames plus the run metadata needed to reproduce them."""

    stride: int
    dt_fs: float
    temperature_k: float
    gamma_per_ps: float
    seed: int
    species: np.ndarray
    frames: list = field(default_factory=list)
    energies: list = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def run_simulation(
    state: MDState,
    potential: ComposedPotential,
    steps: int,
    dt_fs: float,
    temperature: float,
    gamma_per_ps: float,
    stride: int = 1,
    max_num_neighbors: int = 64,
) -> tuple[Trajectory, dict]:
    """Repeated stepping with periodic frame capture and a wall-time report.

    The initial configuration is always frame zero; the trajectory ends
    with 1 + floor(steps/stride) frames.
    """
    if steps < 0 or stride < 1:
        raise ValidationError("steps must be >= 0 and stride >= 1")
    trajectory = Trajectory(
        stride=stride,
        dt_fs=dt_fs,
        temperature_k=temperature,
        gamma_per_ps=gamma_per_ps,
        seed=state.seed,
        species=state.system.species,
    )

    energy_only = ComposedPotential(
        network=potential.network,
        priors=potential.priors,
        derivative=False,
        cutoff=potential.cutoff,
    )

    def capture(current: MDState):
        trajectory.frames.append(np.array(current.system.positions))
        energy = evaluate_auto(
            energy_only, current.system, max_num_neighbors=max_num_neighbors
        ).energy.sum()
        trajectory.energies.append(float(energy))

    capture(state)
    start = time.perf_counter()
    for step_index in range(1, steps + 1):
        try:
            state = langevin_middle_step(
                state, potential, dt_fs, temperature, gamma_per_ps, max_num_neighbors
            )
        except NumericError as err:
            raise NumericError(f"step {step_index}: {err}") from None
        if step_index % stride == 0:
            capture(state)
    wall = time.perf_counter() - start
    rates = throughput(steps, wall, dt_fs) if steps > 0 and wall > 0 else None
    report = {
        "steps": steps,
        "wall_seconds": wall,
        "msteps_per_day": rates.msteps_per_day if rates else float("nan"),
        "ns_per_day": rates.ns_per_day if rates else float("nan"),
        "final_state": state,
    }
    return trajectory, report


def rmsd(reference: np.ndarray, frame: np.ndarray, align: bool = True) -> float:
    """Root mean square deviation, optionally after optimal superposition.

    Alignment removes the centroid shift and solves the optimal rotation
    from the SVD of the covariance, with the usual sign correction to
    exclude reflections.
    """
    reference = np.asarray(reference, dtype=np.float64)
    frame = np.asarray(frame, dtype=np.float64)
    if reference.shape != frame.shape or reference.ndim != 2 or reference.shape[1] != 3:
        raise ValidationError("frames must share one (N, 3) shape")
    if align:
        ref = reference - reference.mean(axis=0)
        mov = frame - frame.mean(axis=0)
        u, _, vt = np.linalg.svd(mov.T @ ref)
        sign = np.sign(np.linalg.det(u @ vt))
        d = np.diag([1.0, 1.0, sign])
        rotation = u @ d @ vt
        mov = mov @ rotation
        diff = mov - ref
    else:
        diff = frame - reference
    return float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))


def write_trajectory(trajectory: Trajectory, path: Union[str, Path]) -> None:
    """Multi-frame extended XYZ plus a flat key:value metadata sidecar."""
    frames = [
        Frame(
            positions=positions,
            species=trajectory.species,
            energy=trajectory.energies[k] if trajectory.energies else 0.0,
        )
        for k, positions in enumerate(trajectory.frames)
    ]
    write_extxyz(path, frames)
    meta = Path(str(path) + ".meta")
    meta.write_text(
        "".join(
            f"{key}: {value}\n"
            for key, value in (
                ("dt_fs", trajectory.dt_fs),
                ("temperature_k", trajectory.temperature_k),
                ("gamma_per_ps", trajectory.gamma_per_ps),
                ("stride", trajectory.stride),
                ("seed", trajectory.seed),
                ("frames", trajectory.n_frames),
            )
        )
    )
