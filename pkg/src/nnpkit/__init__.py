"""Desk-scale infrastructure for neural-network potentials.

Batched periodic neighbor search with padded static-shape output,
analytic physical priors, an invariant graph potential with exact
gradients, a training loop, an NVT Langevin runtime, and a benchmark
harness.
"""

from .compose import ComposedPotential, evaluate, evaluate_auto
from .data import (
    Dataset,
    Frame,
    load_binary_container,
    load_extxyz,
    load_structure,
    save_binary_container,
    split,
    write_extxyz,
)
from .errors import (
    CapacityError,
    DataError,
    DivergenceError,
    NumericError,
    ParseError,
    ToolkitError,
    UsageError,
    ValidationError,
)
from .graphnet import (
    EdgeFeatures,
    GNConfig,
    GNParams,
    GraphPotential,
    backward_forces,
    backward_params,
    cosine_cutoff,
    forward,
    init_params,
    pad_static,
    rbf_expnorm,
)
from .md import (
    MDState,
    Throughput,
    Trajectory,
    initialize_state,
    langevin_middle_step,
    rmsd,
    run_simulation,
    throughput,
    write_trajectory,
)
from .neighbors import (
    NeighborList,
    NeighborSpec,
    as_full_list,
    as_half_list,
    build_neighbor_list,
    build_with_auto_capacity,
    canonicalize,
    capacity_heuristic,
    distance_pullback,
    distance_pullback_second,
)
from .priors import (
    Atomref,
    Coulomb,
    D2Dispersion,
    PairEnergyProfile,
    PriorStack,
    PriorTerm,
    ZBL,
    dimer_scan,
    evaluate_prior_stack,
)
from .system import (
    Box,
    EnergyForces,
    System,
    build_system,
    combine_energy_forces,
    minimum_image,
)
from .training import (
    Adam,
    Checkpoint,
    PlateauSchedule,
    TrainerState,
    ema_update,
    load_checkpoint,
    loss_and_metrics,
    save_checkpoint,
    train,
    warmup_scale,
)
from .config import Config, parse_config
from .bench import BenchConfig, bench_model, bench_neighbors, generate_cloud

__version__ = "0.1.0"
