"""
Priority pooling: per-agent self dynamics and state differences to the target.
"""

from dataclasses import dataclass

import numpy as np

from core.data.types import SceneWindow

POOLING_CHANNELS = (
    "s_dx", "s_dy", "s_dvx", "s_dvy", "s_dax", "s_day",
    "p_x", "p_y", "p_vx", "p_vy", "p_ax", "p_ay",
)  # fmt: skip


@dataclass(frozen=True, eq=False)
class PoolingVectors:
    """``self_dynamics`` and ``pairwise`` are (agents, frames, 6)."""

    self_dynamics: np.ndarray
    pairwise: np.ndarray

    def as_channels(self) -> np.ndarray:
        return np.concatenate([self.self_dynamics, self.pairwise], axis=-1)


def _stack_state(window: SceneWindow) -> np.ndarray:
    return np.concatenate([window.positions, window.velocities, window.accelerations], axis=-1)


def priority_pooling(window: SceneWindow, relative: bool = True) -> PoolingVectors:
    """
    Frame-to-frame changes of each agent and its state relative to the target.

    The self term is zero at the first frame and wherever the agent is absent at
    the frame or its predecessor. With ``relative=False`` the pairwise term holds
    the absolute state (positions shifted back by the window origin) instead.
    """
    state = _stack_state(window)
    mask = window.mask

    self_dynamics = np.zeros_like(state)
    self_dynamics[:, 1:] = np.diff(state, axis=1)
    both = np.zeros_like(mask)
    both[:, 1:] = mask[:, 1:] & mask[:, :-1]
    self_dynamics = np.where(both[..., None], self_dynamics, 0.0)

    if relative:
        pairwise = state - state[0:1]
    else:
        pairwise = state.copy()
        pairwise[..., 0:2] += window.origin
    pairwise = np.where(mask[..., None], pairwise, 0.0)
    return PoolingVectors(self_dynamics=self_dynamics, pairwise=pairwise)
