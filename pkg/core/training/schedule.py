"""
Cosine annealing with warm restarts.
"""

import math

from core.config import TrainConfig


def cosine_annealing(t_cur: float, period: float, lr_max: float, lr_min: float) -> float:
    """lr_min + (lr_max - lr_min) (1 + cos(pi t_cur / period)) / 2."""
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t_cur / period))


def lr_schedule(step: int, config: TrainConfig, steps_per_epoch: int) -> float:
    """
    Learning rate at optimizer step ``step``.

    t_cur is measured in (fractional) epochs and resets every ``restart_period`` epochs.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    epochs = step / max(steps_per_epoch, 1)
    t_cur = math.fmod(epochs, config.restart_period)
    return cosine_annealing(t_cur, config.restart_period, config.lr_max, config.lr_min)
