"""Experiment configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

TRANSFERS = ("none", "mmd", "coral", "adversarial")
FISHERS = ("none", "trace_ratio", "trace_difference")

# Hyperparameter grids used when ``validate_grid`` is on.
GRID_LAMBDA0 = {"trace_difference": (1e-3, 1e-4), "trace_ratio": (0.1, 1.0)}
GRID_LAMBDA_B = (0.0, 0.5, 1.0, 5.0, 10.0)
GRID_LAMBDA1 = (0.0, 0.1)
GRID_LAMBDA2 = (0.1, 1.0, 10.0)
GRID_LR = (0.001, 0.0003)

SEED_ENV = "FISHERDA_SEED"


@dataclass
class ExperimentConfig:
    # objective
    transfer: str = "adversarial"
    fisher: str = "none"
    lambda0: float = 0.0
    lambda_b: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 1.0  # constant weight, or the upper bound u for adversarial
    entropy_domains: str = "target"  # target | both
    adv_gamma: float = 10.0
    mmd_unbiased: bool = False

    # architecture
    feature_hidden: tuple = (16, 16)
    feature_dim: int = 8
    disc_hidden: tuple = (8,)

    # optimizer
    lr: float = 0.01
    lr_omega: float = 10.0
    lr_rho: float = 0.75
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_mult: float = 10.0
    batch_size: int = 36
    max_batches: int = 2000
    eval_every: int = 100
    patience: int = 2500
    early_stop_metric: str = "source_accuracy"  # source_accuracy | source_loss

    # data
    dataset: str = "moons"  # moons | blobs | csv
    n_per_domain: int = 500
    rotation: float = 30.0
    noise: float = 0.1
    num_classes: int = 2
    blob_shift: tuple = (1.5, 1.5)
    blob_radius: float = 3.0
    blob_sigma: float = 1.0
    source_csv: str = ""
    target_csv: str = ""
    source_fraction: float = 1.0
    val_fraction: float = 0.2

    seed: int = 0
    validate_grid: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if self.transfer not in TRANSFERS:
            bad(f"transfer must be one of {TRANSFERS}, got {self.transfer!r}")
        if self.fisher not in FISHERS:
            bad(f"fisher must be one of {FISHERS}, got {self.fisher!r}")
        if self.entropy_domains not in ("target", "both"):
            bad(f"entropy_domains must be target or both, got {self.entropy_domains!r}")
        if self.early_stop_metric not in ("source_accuracy", "source_loss"):
            bad(f"unknown early_stop_metric {self.early_stop_metric!r}")
        if self.dataset not in ("moons", "blobs", "csv"):
            bad(f"unknown dataset {self.dataset!r}")
        for name in ("lambda0", "lambda_b", "lambda1", "lambda2", "weight_decay", "momentum",
                     "noise", "lr_omega", "lr_rho"):
            if getattr(self, name) < 0:
                bad(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("lr", "lr_mult", "adv_gamma", "blob_sigma"):
            if not getattr(self, name) > 0:
                bad(f"{name} must be > 0, got {getattr(self, name)}")
        if self.batch_size < 2 or self.batch_size % 2:
            bad(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.max_batches < 0:
            bad("max_batches must be >= 0")
        if self.eval_every < 1 or self.patience < 1:
            bad("eval_every and patience must be >= 1")
        if self.feature_dim < 1 or min(self.feature_hidden, default=1) < 1 \
                or min(self.disc_hidden, default=1) < 1:
            bad("layer widths must be >= 1")
        if self.num_classes < 2:
            bad("num_classes must be >= 2")
        if len(self.blob_shift) != 2:
            bad("blob_shift needs two components")
        if not 0 < self.source_fraction <= 1:
            bad("source_fraction must lie in (0, 1]")
        if not 0 < self.val_fraction < 1:
            bad("val_fraction must lie in (0, 1)")
        if self.dataset == "csv" and not (self.source_csv and self.target_csv):
            bad("dataset = csv needs source_csv and target_csv")
        if not 0 <= self.seed < 2**64:
            bad("seed must be an unsigned 64-bit integer")
        if self.validate_grid:
            self._check_grid()

    def _check_grid(self):
        def need(name, value, grid):
            if not any(abs(value - g) <= 1e-12 * max(1.0, abs(g)) for g in grid):
                raise ConfigError(f"{name} = {value} is not in the grid {grid}")

        if self.fisher != "none":
            need("lambda0", self.lambda0, GRID_LAMBDA0[self.fisher])
        if self.fisher == "trace_difference":
            need("lambda_b", self.lambda_b, GRID_LAMBDA_B)
        need("lambda1", self.lambda1, GRID_LAMBDA1)
        if self.transfer != "none":
            need("lambda2", self.lambda2, GRID_LAMBDA2)
        need("lr", self.lr, GRID_LR)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> str:
        """Resolved configuration in the same ``key = value`` format."""
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            conv = float if name == "blob_shift" else int
            return tuple(conv(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


_TYPES = {"bool": bool, "int": int, "float": float, "tuple": tuple, "str": str}


def parse_config(text: str, apply_env: bool = True) -> ExperimentConfig:
    kinds = {f.name: _TYPES[f.type] for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, kinds[key], raw)
    if apply_env and os.environ.get(SEED_ENV, "").strip():
        values["seed"] = _coerce("seed", int, os.environ[SEED_ENV])
    return ExperimentConfig(**values)


def load_config(path, apply_env: bool = True) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, apply_env)
