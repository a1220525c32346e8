"""Flat key:value configuration with a fixed vocabulary.

One setting per line, ``key: value``. Blank lines and ``#`` comments are
skipped. Unknown keys are rejected with a nearest-match suggestion.
Every key has a documented default; an empty file is a valid
configuration.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

from .errors import DataError
from .graphnet import GNConfig


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_size(text: str):
    """train/val sizes: integer counts or float fractions."""
    if "." in text or "e" in text.lower():
        return float(text)
    return int(text)


def _parse_optional_float(text: str) -> Optional[float]:
    if text.lower() in ("auto", "none"):
        return None
    return float(text)


def _parse_int_list(text: str) -> tuple:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_str_list(text: str) -> tuple:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


@dataclass(frozen=True)
class Config:
    """Every tunable of the toolkit, with its default."""

    # model
    embedding_dimension: int = 128
    num_layers: int = 2
    num_rbf: int = 32
    rbf_type: str = "expnorm"
    trainable_rbf: bool = False
    activation: str = "silu"
    cutoff_lower: float = 0.0
    cutoff_upper: float = 5.0
    max_z: int = 100
    max_num_neighbors: int = 64
    static_shapes: bool = False
    derivative: bool = True
    mean: Optional[float] = None
    std: Optional[float] = None
    # training
    batch_size: int = 32
    num_epochs: int = 100
    lr: float = 1e-3
    lr_warmup_steps: int = 0
    lr_factor: float = 0.8
    lr_patience: int = 10
    lr_min: float = 1e-7
    early_stopping_patience: int = 30
    ema_alpha_y: float = 1.0
    ema_alpha_neg_dy: float = 1.0
    y_weight: float = 1.0
    neg_dy_weight: float = 0.0
    train_size: Union[int, float] = 0.8
    val_size: Union[int, float] = 0.1
    seed: int = 1
    # molecular dynamics
    timestep_fs: float = 1.0
    temperature_k: float = 298.5
    friction_per_ps: float = 1.0
    steps: int = 1000
    stride: int = 10
    # priors
    priors: tuple = ()
    coulomb_switch_radius: float = 1.0
    d2_s6: float = 1.0
    d2_steep: float = 20.0
    # prior scans
    scan_term: str = "zbl"
    scan_z_i: int = 1
    scan_z_j: int = 1
    scan_q_i: float = 0.0
    scan_q_j: float = 0.0
    scan_min: float = 0.2
    scan_max: float = 5.0
    scan_points: int = 100
    # benchmarks
    particle_counts: tuple = (1024, 4096, 16384)
    batch_sizes: tuple = (1,)
    target_neighbors: float = 64.0
    repetitions: int = 50
    warmup: int = 3
    strategies: tuple = ("cell", "brute")
    structures: tuple = ()

    def to_gn_config(
        self, mean: Optional[float] = None, std: Optional[float] = None
    ) -> GNConfig:
        """Model hyperparameters, with standardization possibly filled in."""
        if self.rbf_type != "expnorm":
            raise DataError(f"unsupported rbf_type {self.rbf_type!r}")
        if mean is None:
            mean = self.mean if self.mean is not None else 0.0
        if std is None:
            std = self.std if self.std is not None else 1.0
        return GNConfig(
            embedding_dimension=self.embedding_dimension,
            num_layers=self.num_layers,
            num_rbf=self.num_rbf,
            cutoff_lower=self.cutoff_lower,
            cutoff_upper=self.cutoff_upper,
            max_z=self.max_z,
            activation=self.activation,
            trainable_rbf=self.trainable_rbf,
            static_shapes=self.static_shapes,
            mean=mean,
            std=std,
        )


_PARSERS = {
    "rbf_type": str,
    "activation": str,
    "scan_term": str,
    "trainable_rbf": _parse_bool,
    "static_shapes": _parse_bool,
    "derivative": _parse_bool,
    "mean": _parse_optional_float,
    "std": _parse_optional_float,
    "train_size": _parse_size,
    "val_size": _parse_size,
    "priors": _parse_str_list,
    "strategies": _parse_str_list,
    "structures": _parse_str_list,
    "particle_counts": _parse_int_list,
    "batch_sizes": _parse_int_list,
}


def _parser_for(name: str, default):
    if name in _PARSERS:
        return _PARSERS[name]
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def known_keys() -> tuple:
    return tuple(f.name for f in fields(Config))


def parse_config(path: Union[str, Path]) -> Config:
    """Read a flat key:value file into a Config.

    Raises DataError for missing files, unknown keys (with a suggestion
    when one is close), and values of the wrong type.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such config file: {path}")
    defaults = Config()
    overrides = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise DataError(
                f"{path}:{lineno}: expected 'key: value', got {line!r}"
            )
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key not in Config.__dataclass_fields__:
            close = difflib.get_close_matches(key, known_keys(), n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise DataError(f"{path}:{lineno}: unknown key {key!r}{hint}")
        parser = _parser_for(key, getattr(defaults, key))
        try:
            overrides[key] = parser(value)
        except ValueError as err:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {err}") from None
    return Config(**overrides)
