"""Learning-rate schedules and stopping policies.

Two fixed schedules (step decay and a multi-stage table), a
reduce-on-plateau automaton, and an early-stopping automaton.  Note the
epoch conventions: ``scheduler_a`` is 0-based (floor formula), while
``scheduler_b`` is 1-based (its stage table starts at "epoch <= 25").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError, UsageError

MIN_DELTA = 1e-6


def scheduler_a(epoch: int, init_lr: float) -> float:
    """Step decay: init_lr * 0.1 ** floor(epoch / 15), epoch counted from 0."""
    if init_lr <= 0:
        raise ConfigurationError(f"init_lr must be positive, got {init_lr}")
    if epoch < 0:
        raise UsageError(f"epoch must be >= 0, got {epoch}")
    return init_lr * 0.1 ** (epoch // 15)


_STAGE_TABLE = (
    (25, 3.0e-4),
    (30, 1.5e-4),
    (35, 7.5e-5),
    (40, 3.0e-5),
)


def scheduler_b(epoch: int) -> float:
    """Multi-stage decay table, epoch counted from 1."""
    if epoch < 1:
        raise UsageError(f"epoch must be >= 1, got {epoch}")
    for bound, lr in _STAGE_TABLE:
        if epoch <= bound:
            return lr
    return 1.0e-5


def _improved(metric: float, best: float | None, direction: str,
              min_delta: float) -> bool:
    if best is None:
        return True
    if direction == "minimize":
        return metric < best - min_delta
    if direction == "maximize":
        return metric > best + min_delta
    raise ConfigurationError(f"direction must be minimize or maximize, got {direction!r}")


@dataclass
class PlateauState:
    """Halve the learning rate after `patience` consecutive non-improving
    epochs (the decay fires on the epoch that exceeds patience)."""

    current_lr: float
    factor: float = 0.5
    patience: int = 2
    min_delta: float = MIN_DELTA
    best_metric: float | None = None
    epochs_since_improvement: int = 0


def plateau_step(state: PlateauState, val_metric: float,
                 direction: str = "minimize") -> float:
    """Feed one epoch's validation metric; returns the (possibly decayed) lr."""
    if math.isnan(val_metric):
        raise UsageError("plateau_step: metric is NaN")
    if _improved(val_metric, state.best_metric, direction, state.min_delta):
        state.best_metric = val_metric
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
        if state.epochs_since_improvement > state.patience:
            state.current_lr *= state.factor
            state.epochs_since_improvement = 0
    return state.current_lr


@dataclass
class EarlyStopState:
    """Stop after `patience + 1` consecutive non-improving epochs."""

    patience: int = 5
    min_delta: float = MIN_DELTA
    best_metric: float | None = None
    epochs_since_improvement: int = 0


def early_stop_step(state: EarlyStopState, val_metric: float,
                    direction: str = "minimize") -> bool:
    """Feed one epoch's validation metric; True means stop training."""
    if math.isnan(val_metric):
        raise UsageError("early_stop_step: metric is NaN")
    if _improved(val_metric, state.best_metric, direction, state.min_delta):
        state.best_metric = val_metric
        state.epochs_since_improvement = 0
        return False
    state.epochs_since_improvement += 1
    return state.epochs_since_improvement > state.patience
