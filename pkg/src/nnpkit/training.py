"""Losses, schedules, Adam, the training loop, and checkpoints.

Training minimizes the energy mean squared error with Adam under a
linear warmup followed by reduce-on-plateau decay driven by the
EMA-smoothed validation loss. Force losses are reported as values in
validation and testing but contribute no parameter gradients; asking
for a force-weighted training loss is a configuration error.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields as dataclass_fields
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .config import Config
from .data import Dataset, split
from .errors import DataError, DivergenceError, ValidationError
from .graphnet import (
    GNConfig,
    GNParams,
    GraphPotential,
    backward_forces,
    backward_params,
    forward,
    init_params,
)
from .neighbors import NeighborSpec, build_with_auto_capacity, capacity_heuristic
from .priors import Atomref, PriorStack, evaluate_prior_stack
from .system import System, build_system

CHECKPOINT_MAGIC = b"MDKC"
CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((np.asarray(pred) - np.asarray(target)) ** 2))


def l1(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(target))))


def loss_and_metrics(
    pred,
    target,
    y_weight: float,
    neg_dy_weight: float,
    mode: str = "train",
) -> dict:
    """Metrics for one prediction/target pair of EnergyForces.

    Train mode returns the weighted scalar under key ``loss``;
    validation returns L1 and MSE separately for energies and forces;
    testing returns L1 only.
    """
    if mode not in ("train", "val", "test"):
        raise ValidationError(f"unknown loss mode {mode!r}")
    if pred.energy.shape != target.energy.shape:
        raise ValidationError(
            f"energy shape mismatch: {pred.energy.shape} vs {target.energy.shape}"
        )
    has_forces = target.forces is not None
    if has_forces and (pred.forces is None or pred.forces.shape != target.forces.shape):
        raise ValidationError("force shape mismatch between prediction and target")
    if neg_dy_weight != 0.0 and not has_forces:
        raise ValidationError("neg_dy_weight must be 0 when targets lack forces")

    if mode == "train":
        loss = y_weight * mse(pred.energy, target.energy)
        if neg_dy_weight != 0.0:
            loss += neg_dy_weight * mse(pred.forces, target.forces)
        return {"loss": loss}
    if mode == "val":
        out = {
            "y_mse": mse(pred.energy, target.energy),
            "y_l1": l1(pred.energy, target.energy),
        }
        if has_forces:
            out["neg_dy_mse"] = mse(pred.forces, target.forces)
            out["neg_dy_l1"] = l1(pred.forces, target.forces)
        return out
    out = {"y_l1": l1(pred.energy, target.energy)}
    if has_forces:
        out["neg_dy_l1"] = l1(pred.forces, target.forces)
    return out


def ema_update(prev: Optional[float], value: float, alpha: float) -> float:
    """Exponential moving average; the first observation passes through."""
    if not 0.0 < alpha <= 1.0:
        raise ValidationError(f"EMA alpha must lie in (0, 1], got {alpha}")
    if prev is None:
        return float(value)
    return float(alpha * value + (1.0 - alpha) * prev)


def warmup_scale(step: int, warmup_steps: int) -> float:
    """Linear ramp: step s (1-based) scales the rate by s / warmup_steps."""
    if warmup_steps <= 0:
        return 1.0
    return min(1.0, step / warmup_steps)


@dataclass
class PlateauSchedule:
    """Reduce-on-plateau with early stopping, driven by one value per epoch.

    The rate is multiplied by ``factor`` whenever ``patience`` epochs
    pass without improvement of the best seen value (the bad-epoch
    counter resets on decay), never dropping below ``lr_min``. Stopping
    triggers after ``early_stopping_patience`` epochs without a new
    best.
    """

    lr: float
    factor: float
    patience: int
    lr_min: float
    early_stopping_patience: int
    best: Optional[float] = None
    bad_epochs: int = 0
    epochs_since_best: int = 0

    def observe(self, value: float) -> dict:
        improved = self.best is None or value < self.best
        decayed = False
        if improved:
            self.best = float(value)
            self.bad_epochs = 0
            self.epochs_since_best = 0
        else:
            self.bad_epochs += 1
            self.epochs_since_best += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.lr_min)
                self.bad_epochs = 0
                decayed = True
        stop = self.epochs_since_best >= self.early_stopping_patience
        return {"improved": improved, "decayed": decayed, "stop": stop}


class Adam:
    """Standard Adam with bias correction; updates arrays in place."""

    def __init__(self, named_arrays):
        self.m = {name: np.zeros_like(arr) for name, arr in named_arrays}
        self.v = {name: np.zeros_like(arr) for name, arr in self.m.items()}
        self.t = 0

    def step(self, named_params, named_grads, lr: float):
        self.t += 1
        bias1 = 1.0 - ADAM_BETA1**self.t
        bias2 = 1.0 - ADAM_BETA2**self.t
        grads = dict(named_grads)
        for name, param in named_params:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            param[...] -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)


@dataclass
class TrainerState:
    """Loop position, schedule state, and smoothed losses."""

    step: int = 0
    epoch: int = 0
    lr: float = 0.0
    warmup_steps: int = 0
    lr_factor: float = 0.8
    lr_patience: int = 10
    lr_min: float = 1e-7
    early_stopping_patience: int = 30
    ema_alpha_y: float = 1.0
    ema_alpha_neg_dy: float = 1.0
    ema_train: Optional[float] = None
    ema_y: Optional[float] = None
    ema_neg_dy: Optional[float] = None
    best_val: Optional[float] = None
    epochs_since_best: int = 0
    bad_epochs: int = 0
    adam_t: int = 0


@dataclass
class Checkpoint:
    """Everything needed to reuse or resume a training run."""

    config: Config
    params: GNParams
    state: TrainerState
    atomref_table: Optional[dict] = None
    split_seed: int = 0
    split_indices: dict = field(default_factory=dict)
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def graph_potential(self) -> GraphPotential:
        gn = self.config.to_gn_config(
            mean=self.config.mean if self.config.mean is not None else 0.0,
            std=self.config.std if self.config.std is not None else 1.0,
        )
        return GraphPotential(config=gn, params=self.params)

    def prior_stack(self) -> PriorStack:
        terms = []
        if self.atomref_table is not None:
            terms.append(Atomref(table=dict(self.atomref_table), learnable=True))
        return PriorStack(tuple(terms))


def _assemble_batch(frames: list) -> System:
    positions = np.concatenate([f.positions for f in frames])
    species = np.concatenate([f.species for f in frames])
    sizes = [f.n_atoms for f in frames]
    batch = np.repeat(np.arange(len(frames), dtype=np.int64), sizes)
    return build_system(positions=positions, species=species, batch=batch)


def _species_counts(system: System, max_z: int) -> np.ndarray:
    flat = system.batch * max_z + system.species
    counts = np.bincount(flat, minlength=system.n_samples * max_z)
    return counts.reshape(system.n_samples, max_z).astype(np.float64)


def _network_spec(gn: GNConfig, n_atoms: int, max_num_neighbors: int) -> NeighborSpec:
    return NeighborSpec(
        cutoff_upper=gn.cutoff_upper,
        cutoff_lower=gn.cutoff_lower,
        capacity=2 * capacity_heuristic(n_atoms, max_num_neighbors),
        full_list=True,
    )


def train(
    config: Config,
    dataset: Dataset,
    stack: Optional[PriorStack] = None,
    log: Optional[Callable[[str], None]] = None,
) -> Checkpoint:
    """Fit the graph potential (plus a learnable reference table if the
    stack carries one) to frame energies.

    Static prior contributions are evaluated once per frame and
    subtracted from the targets, so the network learns the residual.
    Deterministic for a fixed config seed. Returns the checkpoint of the
    best validation epoch.
    """
    if config.neg_dy_weight != 0.0:
        raise ValidationError(
            "neg_dy_weight > 0 is not supported in training: force-loss parameter "
            "gradients would need a second backward pass through the force "
            "computation, which this trainer excludes; force losses are still "
            "reported as validation and test metrics"
        )
    stack = stack if stack is not None else PriorStack()
    learnable = stack.learnable_atomref()
    static_terms = PriorStack(
        tuple(t for t in stack.terms if not (isinstance(t, Atomref) and t.learnable))
    )

    train_idx, val_idx, _ = split(dataset, config.train_size, config.val_size, config.seed)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValidationError("training needs non-empty train and validation splits")

    # Per-frame constants: static prior energies and forces.
    n_frames = len(dataset)
    static_energy = np.zeros(n_frames)
    static_forces = [None] * n_frames
    if len(static_terms) > 0:
        for i in range(n_frames):
            frame = dataset[i]
            frame_system = build_system(frame.positions, frame.species)
            neighbors = None
            if static_terms.needs_neighbors:
                spec = NeighborSpec(
                    cutoff_upper=config.cutoff_upper,
                    cutoff_lower=config.cutoff_lower,
                    capacity=capacity_heuristic(frame.n_atoms, config.max_num_neighbors),
                )
                neighbors = build_with_auto_capacity(frame_system, spec)
            part = evaluate_prior_stack(frame_system, neighbors, static_terms)
            static_energy[i] = part.energy[0]
            static_forces[i] = part.forces

    energies = np.array([f.energy for f in dataset])
    residual = energies - static_energy

    if config.mean is not None and config.std is not None:
        mean, std = config.mean, config.std
    else:
        atoms = np.array([dataset[i].n_atoms for i in range(n_frames)])
        per_atom = residual[train_idx] / atoms[train_idx]
        mean = float(per_atom.mean()) if config.mean is None else config.mean
        computed_std = float(per_atom.std())
        std = (
            (computed_std if computed_std > 0 else 1.0)
            if config.std is None
            else config.std
        )
    gn = config.to_gn_config(mean=mean, std=std)

    params = init_params(gn, seed=config.seed)
    atomref_vec = None
    if learnable is not None:
        atomref_vec = np.zeros(config.max_z)
        for z, value in learnable.table.items():
            if not 0 <= z < config.max_z:
                raise ValidationError(f"atomref entry {z} is out of range for max_z")
            atomref_vec[z] = value

    def named_parameters():
        yield from params.named_arrays(trainable_rbf=config.trainable_rbf)
        if atomref_vec is not None:
            yield "atomref", atomref_vec

    optimizer = Adam(named_parameters())
    schedule = PlateauSchedule(
        lr=config.lr,
        factor=config.lr_factor,
        patience=config.lr_patience,
        lr_min=config.lr_min,
        early_stopping_patience=config.early_stopping_patience,
    )
    state = TrainerState(
        lr=config.lr,
        warmup_steps=config.lr_warmup_steps,
        lr_factor=config.lr_factor,
        lr_patience=config.lr_patience,
        lr_min=config.lr_min,
        early_stopping_patience=config.early_stopping_patience,
        ema_alpha_y=config.ema_alpha_y,
        ema_alpha_neg_dy=config.ema_alpha_neg_dy,
    )
    rng = np.random.default_rng(config.seed)
    want_val_forces = config.derivative and all(
        dataset[i].forces is not None for i in val_idx
    )

    def predict_chunk(indices, with_forces):
        frames = [dataset[i] for i in indices]
        system = _assemble_batch(frames)
        neighbors = build_with_auto_capacity(
            system, _network_spec(gn, system.n_atoms, config.max_num_neighbors)
        )
        result, cache = forward(params, gn, system, neighbors)
        pred_e = result.energy + static_energy[indices]
        if atomref_vec is not None:
            pred_e = pred_e + _species_counts(system, config.max_z) @ atomref_vec
        pred_f = None
        if with_forces:
            pred_f = backward_forces(params, gn, system, neighbors, cache)
            base = [static_forces[i] for i in indices]
            if all(b is not None for b in base):
                pred_f = pred_f + np.concatenate(base)
        return pred_e, pred_f

    def validation_losses():
        y_sq = y_ab = f_sq = f_ab = 0.0
        n_samples = n_force_terms = 0
        for lo in range(0, len(val_idx), config.batch_size):
            chunk = val_idx[lo : lo + config.batch_size]
            pred_e, pred_f = predict_chunk(chunk, want_val_forces)
            diff = pred_e - energies[chunk]
            y_sq += float(np.sum(diff**2))
            y_ab += float(np.sum(np.abs(diff)))
            n_samples += len(chunk)
            if want_val_forces:
                target_f = np.concatenate([dataset[i].forces for i in chunk])
                fdiff = pred_f - target_f
                f_sq += float(np.sum(fdiff**2))
                f_ab += float(np.sum(np.abs(fdiff)))
                n_force_terms += fdiff.size
        out = {"y_mse": y_sq / n_samples, "y_l1": y_ab / n_samples}
        if want_val_forces and n_force_terms:
            out["neg_dy_mse"] = f_sq / n_force_terms
            out["neg_dy_l1"] = f_ab / n_force_terms
        return out

    best_params = params.copy()
    best_atomref = None if atomref_vec is None else atomref_vec.copy()
    order = np.array(train_idx)

    for epoch in range(1, config.num_epochs + 1):
        state.epoch = epoch
        rng.shuffle(order)
        epoch_losses = []
        for lo in range(0, len(order), config.batch_size):
            chunk = order[lo : lo + config.batch_size]
            frames = [dataset[i] for i in chunk]
            system = _assemble_batch(frames)
            neighbors = build_with_auto_capacity(
                system, _network_spec(gn, system.n_atoms, config.max_num_neighbors)
            )
            result, cache = forward(params, gn, system, neighbors)
            counts = None
            pred = result.energy
            if atomref_vec is not None:
                counts = _species_counts(system, config.max_z)
                pred = pred + counts @ atomref_vec
            target = residual[chunk]
            diff = pred - target
            with np.errstate(over="ignore"):
                loss = config.y_weight * float(np.mean(diff**2))
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"loss diverged at epoch {epoch}, step {state.step}: {loss}"
                )
            upstream = config.y_weight * 2.0 * diff / len(chunk)
            grads = backward_params(params, gn, system, neighbors, cache, upstream)
            named_grads = list(grads.named_arrays(trainable_rbf=config.trainable_rbf))
            if atomref_vec is not None:
                named_grads.append(("atomref", upstream @ counts))
            state.step += 1
            lr_eff = schedule.lr * warmup_scale(state.step, config.lr_warmup_steps)
            optimizer.step(named_parameters(), named_grads, lr_eff)
            state.lr = schedule.lr
            state.adam_t = optimizer.t
            epoch_losses.append(loss)

        state.ema_train = ema_update(
            state.ema_train, float(np.mean(epoch_losses)), config.ema_alpha_y
        )
        val = validation_losses()
        val_loss = config.y_weight * val["y_mse"]
        state.ema_y = ema_update(state.ema_y, val["y_mse"], config.ema_alpha_y)
        if "neg_dy_mse" in val:
            state.ema_neg_dy = ema_update(
                state.ema_neg_dy, val["neg_dy_mse"], config.ema_alpha_neg_dy
            )
        verdict = schedule.observe(config.y_weight * state.ema_y)
        state.best_val = schedule.best
        state.epochs_since_best = schedule.epochs_since_best
        state.bad_epochs = schedule.bad_epochs
        state.lr = schedule.lr
        if verdict["improved"]:
            best_params = params.copy()
            if atomref_vec is not None:
                best_atomref = atomref_vec.copy()
        if log is not None:
            log(
                f"epoch {epoch}: train {state.ema_train:.6g} "
                f"val {val_loss:.6g} lr {schedule.lr:.3g}"
            )
        if verdict["stop"]:
            break

    table = None
    if learnable is not None:
        table = {z: float(best_atomref[z]) for z in sorted(learnable.table)}
    final_config = _config_with_stats(config, mean, std)
    return Checkpoint(
        config=final_config,
        params=best_params,
        state=state,
        atomref_table=table,
        split_seed=config.seed,
        split_indices={
            "train": np.asarray(train_idx),
            "val": np.asarray(val_idx),
        },
        adam_m=optimizer.m,
        adam_v=optimizer.v,
    )


def _config_with_stats(config: Config, mean: float, std: float) -> Config:
    from dataclasses import replace

    return replace(config, mean=mean, std=std)


def _config_to_jsonable(config: Config) -> dict:
    out = {}
    for f in dataclass_fields(Config):
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def _config_from_jsonable(payload: dict) -> Config:
    defaults = Config()
    kwargs = {}
    for f in dataclass_fields(Config):
        if f.name not in payload:
            continue
        value = payload[f.name]
        if isinstance(getattr(defaults, f.name), tuple) and isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return Config(**kwargs)


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    """Versioned little-endian binary; same array encoding as the dataset
    container, prefixed by a JSON header for scalars."""
    from .data import _write_array

    header = {
        "version": ckpt.version,
        "config": _config_to_jsonable(ckpt.config),
        "state": asdict(ckpt.state),
        "atomref_table": None
        if ckpt.atomref_table is None
        else {str(z): v for z, v in ckpt.atomref_table.items()},
        "split_seed": ckpt.split_seed,
    }
    encoded = json.dumps(header).encode("utf-8")
    arrays: list[tuple[str, np.ndarray]] = []
    for name, arr in ckpt.params.named_arrays():
        arrays.append((f"params.{name}", np.atleast_1d(arr)))
    for name, arr in ckpt.adam_m.items():
        arrays.append((f"adam_m.{name}", np.atleast_1d(arr)))
    for name, arr in ckpt.adam_v.items():
        arrays.append((f"adam_v.{name}", np.atleast_1d(arr)))
    for name, arr in ckpt.split_indices.items():
        arrays.append((f"split.{name}", np.asarray(arr, dtype=np.int64)))
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<I", ckpt.version))
        handle.write(struct.pack("<I", len(encoded)))
        handle.write(encoded)
        handle.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays:
            _write_array(handle, name, arr)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    from .data import _DTYPE_CODES, _read_exact

    path = Path(path)
    if not path.exists():
        raise DataError(f"no such checkpoint: {path}")
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"not a checkpoint file: {path}")
        (version,) = struct.unpack("<I", _read_exact(handle, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise DataError(
                f"unsupported checkpoint version {version}; this build reads "
                f"version {CHECKPOINT_VERSION}"
            )
        (json_len,) = struct.unpack("<I", _read_exact(handle, 4, "header length"))
        header = json.loads(_read_exact(handle, json_len, "header"))
        (count,) = struct.unpack("<I", _read_exact(handle, 4, "array count"))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(handle, 2, "name length"))
            name = _read_exact(handle, name_len, "array name").decode("utf-8")
            code, rank = struct.unpack("<BB", _read_exact(handle, 2, "array header"))
            shape = struct.unpack(f"<{rank}Q", _read_exact(handle, 8 * rank, "shape"))
            dtype = np.dtype(_DTYPE_CODES[code])
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            data = _read_exact(handle, n_bytes, f"array {name!r}")
            arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()

    config = _config_from_jsonable(header["config"])
    gn = config.to_gn_config(
        mean=config.mean if config.mean is not None else 0.0,
        std=config.std if config.std is not None else 1.0,
    )
    params = init_params(gn, seed=0)
    for name, arr in params.named_arrays():
        key = f"params.{name}"
        if key not in arrays:
            raise DataError(f"checkpoint is missing array {key!r}")
        loaded = arrays[key].reshape(arr.shape)
        arr[...] = loaded
    state = TrainerState(**header["state"])
    atomref = header.get("atomref_table")
    if atomref is not None:
        atomref = {int(z): float(v) for z, v in atomref.items()}
    adam_m = {
        name[len("adam_m.") :]: arr
        for name, arr in arrays.items()
        if name.startswith("adam_m.")
    }
    adam_v = {
        name[len("adam_v.") :]: arr
        for name, arr in arrays.items()
        if name.startswith("adam_v.")
    }
    split_indices = {
        name[len("split.") :]: arr
        for name, arr in arrays.items()
        if name.startswith("split.")
    }
    return Checkpoint(
        config=config,
        params=params,
        state=state,
        atomref_table=atomref,
        split_seed=header["split_seed"],
        split_indices=split_indices,
        adam_m=adam_m,
        adam_v=adam_v,
        version=version,
    )
