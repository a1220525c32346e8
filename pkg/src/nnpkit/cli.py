"""Command-line front end.

Subcommands: train, simulate, infer, bench-neighbors, bench-model,
scan-prior. Every command reads one flat config file plus positional
paths. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import BenchConfig, bench_model, bench_neighbors
from .compose import ComposedPotential, evaluate_auto
from .config import Config, parse_config
from .data import load_binary_container, load_extxyz, load_structure
from .errors import DataError, NumericError, ToolkitError, UsageError
from .md import initialize_state, run_simulation, write_trajectory
from .priors import Coulomb, D2Dispersion, PriorStack, ZBL, dimer_scan
from .system import build_system
from .training import load_checkpoint, save_checkpoint, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser):
    parser.add_argument("--config", type=Path, help="flat key:value config file")
    parser.add_argument("--output", type=Path, help="output path")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="worker thread budget")


def build_parser() -> _Parser:
    parser = _Parser(prog="nnpkit", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    p_train = sub.add_parser("train", help="fit a model to a dataset")
    p_train.add_argument("dataset", type=Path)
    p_sim = sub.add_parser("simulate", help="run NVT dynamics")
    p_sim.add_argument("structure", type=Path)
    p_sim.add_argument("checkpoint", type=Path, nargs="?")
    p_infer = sub.add_parser("infer", help="energy and forces for a structure")
    p_infer.add_argument("checkpoint", type=Path)
    p_infer.add_argument("structure", type=Path)
    sub.add_parser("bench-neighbors", help="neighbor-search scaling benchmark")
    p_bm = sub.add_parser("bench-model", help="model inference benchmark")
    p_bm.add_argument("structures", type=Path, nargs="*")
    sub.add_parser("scan-prior", help="dimer energy curve of one prior term")
    for p in sub.choices.values():
        _add_common(p)
    return parser


def _load_config(args) -> Config:
    config = parse_config(args.config) if args.config else Config()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _apply_threads(args):
    if getattr(args, "threads", None) is None:
        return
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    try:
        import numba

        numba.set_num_threads(args.threads)
    except (ImportError, ValueError):
        pass


def stack_from_config(config: Config) -> PriorStack:
    terms = []
    for name in config.priors:
        if name == "zbl":
            terms.append(ZBL())
        elif name == "d2":
            terms.append(D2Dispersion(s6=config.d2_s6, d_steep=config.d2_steep))
        elif name == "coulomb":
            terms.append(Coulomb(switch_radius=config.coulomb_switch_radius))
        else:
            raise DataError(
                f"unknown prior {name!r}; expected zbl, d2, or coulomb"
            )
    return PriorStack(tuple(terms))


def _load_dataset(path: Path):
    if path.suffix in (".xyz", ".extxyz"):
        return load_extxyz(path)
    return load_binary_container(path)


def _write_or_print(text: str, output):
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _cmd_train(args) -> int:
    config = _load_config(args)
    dataset = _load_dataset(args.dataset)
    stack = stack_from_config(config)
    checkpoint = train(config, dataset, stack, log=lambda msg: print(msg))
    out = args.output or Path("model.ckpt")
    save_checkpoint(checkpoint, out)
    best = checkpoint.state.best_val
    print(f"saved {out} (best validation loss {best:.6g})")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    positions, species = load_structure(args.structure)
    system = build_system(positions=positions, species=species)
    network = None
    terms = stack_from_config(config).terms
    if args.checkpoint is not None:
        checkpoint = load_checkpoint(args.checkpoint)
        network = checkpoint.graph_potential()
        terms = checkpoint.prior_stack().terms + terms
    potential = ComposedPotential(
        network=network,
        priors=PriorStack(terms),
        cutoff=config.cutoff_upper,
    )
    state = initialize_state(system, config.temperature_k, seed=config.seed)
    trajectory, report = run_simulation(
        state,
        potential,
        steps=config.steps,
        dt_fs=config.timestep_fs,
        temperature=config.temperature_k,
        gamma_per_ps=config.friction_per_ps,
        stride=config.stride,
        max_num_neighbors=config.max_num_neighbors,
    )
    out = args.output or Path("trajectory.xyz")
    write_trajectory(trajectory, out)
    print(
        f"{report['steps']} steps in {report['wall_seconds']:.3f} s: "
        f"{report['msteps_per_day']:.3f} Msteps/day, "
        f"{report['ns_per_day']:.3f} ns/day; wrote {out}"
    )
    return 0


def _cmd_infer(args) -> int:
    config = _load_config(args)
    checkpoint = load_checkpoint(args.checkpoint)
    positions, species = load_structure(args.structure)
    system = build_system(positions=positions, species=species)
    potential = ComposedPotential(
        network=checkpoint.graph_potential(),
        priors=PriorStack(
            checkpoint.prior_stack().terms + stack_from_config(config).terms
        ),
        derivative=config.derivative,
    )
    result = evaluate_auto(potential, system, config.max_num_neighbors)
    lines = [f"energy_ev {float(result.energy[0])!r}"]
    if result.forces is not None:
        for idx, force in enumerate(result.forces):
            fx, fy, fz = (float(v) for v in force)
            lines.append(f"force_ev_per_angstrom {idx} {fx!r} {fy!r} {fz!r}")
    _write_or_print("\n".join(lines) + "\n", args.output)
    return 0


def _cmd_bench_neighbors(args) -> int:
    config = _load_config(args)
    _write_or_print(bench_neighbors(BenchConfig.from_config(config)), args.output)
    return 0


def _cmd_bench_model(args) -> int:
    config = _load_config(args)
    paths = list(args.structures) or [Path(p) for p in config.structures] or None
    _write_or_print(bench_model(BenchConfig.from_config(config), paths), args.output)
    return 0


def _cmd_scan_prior(args) -> int:
    config = _load_config(args)
    name = config.scan_term
    if name == "zbl":
        term = ZBL()
    elif name == "d2":
        term = D2Dispersion(s6=config.d2_s6, d_steep=config.d2_steep)
    elif name == "coulomb":
        term = Coulomb(switch_radius=config.coulomb_switch_radius)
    else:
        raise DataError(f"cannot scan prior {name!r}; expected zbl, d2, or coulomb")
    grid = np.linspace(config.scan_min, config.scan_max, config.scan_points)
    profile = dimer_scan(
        term,
        config.scan_z_i,
        config.scan_z_j,
        grid,
        q_i=config.scan_q_i,
        q_j=config.scan_q_j,
    )
    _write_or_print(profile.to_csv(), args.output)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "simulate": _cmd_simulate,
    "infer": _cmd_infer,
    "bench-neighbors": _cmd_bench_neighbors,
    "bench-model": _cmd_bench_model,
    "scan-prior": _cmd_scan_prior,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand; see --help")
        _apply_threads(args)
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return 3
    except ToolkitError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
