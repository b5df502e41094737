"""SGD with momentum and coupled weight decay, the learning-rate and
adversarial-weight schedules, and early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, MetricError, ParameterError


def _progress(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"training progress must lie in [0, 1], got {p}")
    return float(p)


@dataclass
class SgdState:
    """Optimizer state. ``multipliers`` maps a parameter group name to its
    learning-rate multiplier; velocities are created lazily per parameter."""

    lr_base: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    multipliers: dict = field(default_factory=dict)
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, mult in self.multipliers.items():
            if not mult > 0:
                raise ParameterError(f"lr multiplier for {name!r} must be > 0, got {mult}")


def sgd_step(params, grads, state: SgdState, lr: float, group: str = "default"):
    """In-place update of ``params`` (a list of arrays) for one parameter group.

    ``v <- momentum * v + (g + weight_decay * w)``; ``w <- w - lr * mult * v``.
    Returns ``params``.
    """
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    mult = state.multipliers.get(group, 1.0)
    for i, (w, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if w.shape != g.shape:
            raise DimensionError(f"parameter {group}[{i}] has shape {w.shape}, gradient {g.shape}")
        key = (group, i)
        v = state.velocity.get(key)
        if v is None:
            v = state.velocity[key] = np.zeros_like(w)
        elif v.shape != w.shape:
            raise DimensionError(f"velocity for {group}[{i}] has shape {v.shape}, parameter {w.shape}")
        v *= state.momentum
        v += g + state.weight_decay * w
        w -= lr * mult * v
    return params


@dataclass(frozen=True)
class LrSchedule:
    eta0: float = 0.001
    omega: float = 10.0
    rho: float = 0.75

    def __post_init__(self):
        if self.omega < 0 or self.rho < 0:
            raise ParameterError("lr decay constants must be nonnegative")


def lr_at(sched: LrSchedule, p: float) -> float:
    p = _progress(p)
    return sched.eta0 / (1.0 + sched.omega * p) ** sched.rho


@dataclass(frozen=True)
class AdvSchedule:
    u: float = 1.0
    gamma: float = 10.0

    def __post_init__(self):
        if self.u < 0 or not self.gamma > 0:
            raise ParameterError("adversarial schedule needs u >= 0 and gamma > 0")


def lambda2_at(sched: AdvSchedule, p: float) -> float:
    p = _progress(p)
    return 2.0 * sched.u / (1.0 + math.exp(-sched.gamma * p)) - sched.u


class EarlyStopper:
    """Stops once the metric has not strictly improved for ``patience``
    mini-batches."""

    def __init__(self, patience: int = 2500):
        if patience < 1:
            raise ParameterError(f"patience must be >= 1, got {patience}")
        self.patience = int(patience)
        self.best = None
        self.counter = 0

    def update(self, metric: float, higher_is_better: bool = True, steps: int = 1) -> str:
        """Record ``metric`` observed after ``steps`` more mini-batches;
        returns ``"continue"`` or ``"stop"``."""
        metric = float(metric)
        if math.isnan(metric) or math.isinf(metric):
            raise MetricError(f"early-stopping metric must be finite, got {metric}")
        improved = self.best is None or (
            metric > self.best if higher_is_better else metric < self.best
        )
        if improved:
            self.best = metric
            self.counter = 0
            return "continue"
        self.counter = min(self.counter + int(steps), self.patience)
        return "stop" if self.counter >= self.patience else "continue"


def early_stop_update(stopper: EarlyStopper, metric: float, higher_is_better: bool = True,
                      steps: int = 1) -> str:
    return stopper.update(metric, higher_is_better, steps)
