"""Benchmark harness: neighbor-search scaling and model inference timing.

Every measured point is the mean of identical repetitions after warmup
runs. The work inside a timed region is deterministic, so repetitions
differ only in wall time. Neighbor results are CSV; model results are a
text table of million-steps-per-day figures (86.4 divided by the
per-step milliseconds).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .compose import ComposedPotential, evaluate
from .config import Config
from .data import load_structure
from .errors import CapacityError, ValidationError
from .graphnet import GNConfig, GraphPotential, init_params
from .neighbors import NeighborSpec, as_full_list, build_neighbor_list
from .system import Box, System, build_system


@dataclass(frozen=True)
class BenchConfig:
    """Knobs of the benchmark protocol."""

    particle_counts: tuple = (1024, 4096, 16384)
    batch_sizes: tuple = (1,)
    target_neighbors: float = 64.0
    cutoff: float = 4.5
    repetitions: int = 50
    warmup: int = 3
    seed: int = 0
    strategies: tuple = ("cell", "brute")
    model_embedding: int = 128
    model_rbf: int = 32
    model_max_neighbors: int = 32
    model_layers: tuple = (0, 1, 2)

    def __post_init__(self):
        if any(n < 1 for n in self.particle_counts) or self.repetitions < 1:
            raise ValidationError("particle counts and repetitions must be >= 1")
        for strategy in self.strategies:
            if strategy not in ("brute", "cell"):
                raise ValidationError(f"unknown strategy {strategy!r}")

    @classmethod
    def from_config(cls, config: Config) -> "BenchConfig":
        return cls(
            particle_counts=config.particle_counts,
            batch_sizes=config.batch_sizes,
            target_neighbors=config.target_neighbors,
            cutoff=config.cutoff_upper,
            repetitions=config.repetitions,
            warmup=config.warmup,
            seed=config.seed,
            strategies=config.strategies,
        )


def generate_cloud(
    n: int, k: float, cutoff: float, batches: int, seed: int
) -> System:
    """Uniform cloud in a periodic cube sized for k neighbors per atom.

    The edge follows from the density that makes the expected count in a
    cutoff sphere equal k. Atoms fall into contiguous, near-equal batch
    blocks.
    """
    if not 1 <= batches <= n:
        raise ValidationError("need 1 <= batches <= n")
    edge = cutoff * (4.0 * np.pi * n / (3.0 * k)) ** (1.0 / 3.0)
    if cutoff > edge / 2.0:
        raise ValidationError(
            f"box too small for cutoff: {k} neighbors per atom out of {n} atoms "
            f"gives edge {edge:.3f} below twice the cutoff"
        )
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, edge, (n, 3))
    sizes = np.full(batches, n // batches, dtype=np.int64)
    sizes[: n % batches] += 1
    batch = np.repeat(np.arange(batches, dtype=np.int64), sizes)
    return build_system(
        positions=positions,
        species=np.ones(n, dtype=np.int64),
        batch=batch,
        box=Box.cubic(edge),
    )


def _time_strategy(system: System, spec: NeighborSpec, warmup: int, reps: int):
    """(mean ms, pairs found, retries) with one capacity doubling allowed."""
    retries = 0
    for _ in range(max(warmup, 1)):
        try:
            reference = build_neighbor_list(system, spec)
        except CapacityError as err:
            if retries >= 1:
                raise
            retries += 1
            spec = replace(spec, capacity=max(2 * spec.capacity, err.required))
            reference = build_neighbor_list(system, spec)
    samples = []
    for _ in range(reps):
        start = time.perf_counter()
        build_neighbor_list(system, spec)
        samples.append(time.perf_counter() - start)
    return 1000.0 * float(np.mean(samples)), reference.count, retries


def bench_neighbors(bench: BenchConfig) -> str:
    """CSV with one row per (particles, batch) point.

    Columns for both strategies are always present; unselected ones stay
    empty. Capacity statistics go into leading comment lines.
    """
    comments = []
    rows = ["particles,batch,cell_ms,brute_ms"]
    for n in bench.particle_counts:
        for batches in bench.batch_sizes:
            system = generate_cloud(
                n, bench.target_neighbors, bench.cutoff, batches, bench.seed
            )
            capacity = max(int(np.ceil(n * bench.target_neighbors)), 16)
            cells: dict = {"cell": "", "brute": ""}
            for strategy in bench.strategies:
                spec = NeighborSpec(
                    cutoff_upper=bench.cutoff,
                    capacity=capacity,
                    strategy=strategy,
                    deterministic=False,
                )
                ms, pairs, retries = _time_strategy(
                    system, spec, bench.warmup, bench.repetitions
                )
                cells[strategy] = f"{ms:.6f}"
                comments.append(
                    f"# n={n} batch={batches} strategy={strategy} "
                    f"capacity={capacity} pairs={pairs} retries={retries}"
                )
            rows.append(f"{n},{batches},{cells['cell']},{cells['brute']}")
    return "\n".join(comments + rows) + "\n"


def shipped_structures() -> list:
    """Paths of the desk-scale benchmark structures bundled with the package."""
    root = resources.files("nnpkit") / "structures"
    return sorted(
        Path(str(entry)) for entry in root.iterdir() if str(entry).endswith(".xyz")
    )


def bench_model(
    bench: BenchConfig, structure_paths: Optional[Sequence] = None
) -> str:
    """Energy-plus-forces timing table over layer counts.

    Rows are structures, columns the layer counts, entries in million
    steps per day. Neighbor lists are prebuilt so the figures isolate
    the model evaluation, one forward and one force pass per step.
    """
    paths = [Path(p) for p in (structure_paths or shipped_structures())]
    if not paths:
        raise ValidationError("no structures to benchmark")
    header = ["structure (atoms)"] + [f"{layers}L" for layers in bench.model_layers]
    lines = []
    for path in paths:
        if not path.exists():
            raise ValidationError(f"missing structure file: {path}")
        positions, species = load_structure(path)
        system = build_system(positions=positions, species=species)
        row = [f"{path.stem} ({system.n_atoms})"]
        spec = NeighborSpec(
            cutoff_upper=bench.cutoff,
            capacity=2 * system.n_atoms * bench.model_max_neighbors,
            full_list=True,
        )
        neighbors = as_full_list(build_neighbor_list(system, spec))
        for layers in bench.model_layers:
            gn = GNConfig(
                embedding_dimension=bench.model_embedding,
                num_layers=layers,
                num_rbf=bench.model_rbf,
                cutoff_upper=bench.cutoff,
                max_z=int(system.species.max()) + 1,
            )
            potential = ComposedPotential(
                network=GraphPotential(config=gn, params=init_params(gn, bench.seed))
            )
            for _ in range(max(bench.warmup, 1)):
                evaluate(potential, system, neighbors)
            samples = []
            for _ in range(bench.repetitions):
                start = time.perf_counter()
                evaluate(potential, system, neighbors)
                samples.append(time.perf_counter() - start)
            ms = 1000.0 * float(np.mean(samples))
            row.append(f"{86.4 / ms:.3f}")
        lines.append(row)
    widths = [
        max(len(header[c]), *(len(line[c]) for line in lines))
        for c in range(len(header))
    ]
    def fmt(row):
        return "  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row))
    return "\n".join([fmt(header)] + [fmt(line) for line in lines]) + "\n"


def fit_loglog_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=np.float64))
    y = np.log(np.asarray(times, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])
