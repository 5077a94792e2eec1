"""
Perceived-safety indices: time-to-collision exposure and closest-approach risk.

Per agent and frame the index set holds
    ttc  time to collision with the most critical neighbor (s, +inf when none)
    tet  cumulative exposure time with 0 <= ttc <= ttc_star (s)
    tit  cumulative integral of the shortfall ttc_star - ttc over the same frames (s^2)
    spr  log risk of closest approach under the velocity difference
    drv  log risk of closest approach under the acceleration difference
Risk is taken against the nearest neighbor at each frame.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from core.config import FeatureConfig
from core.data.types import AgentState, SceneWindow
from core.errors import DataError

logger = logging.getLogger(__name__)

SAFETY_CHANNELS = ("ttc", "tet", "tit", "spr", "drv")
DEFAULT_RISK_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class SafetyIndexSet:
    """Safety indices, each (agents, frames). ``ttc`` may hold +inf."""

    ttc: np.ndarray
    tet: np.ndarray
    tit: np.ndarray
    spr: np.ndarray
    drv: np.ndarray
    mask: np.ndarray

    def as_channels(self, ttc_sentinel: float = 1e4) -> np.ndarray:
        """Stack into (agents, frames, 5) with +inf TTC replaced by the sentinel and absent slots zeroed."""
        ttc = np.where(np.isfinite(self.ttc), self.ttc, ttc_sentinel)
        stacked = np.stack([ttc, self.tet, self.tit, self.spr, self.drv], axis=-1)
        return np.where(self.mask[..., None], stacked, 0.0)


# --- Pairwise quantities ---


def pair_distance_rate(state_i: AgentState, state_j: AgentState) -> tuple[float, float]:
    """
    Distance between two agents and its rate of change.

    Returns:
        (d, d_dot) with d = |p_i - p_j| and d_dot = (p_i - p_j).(v_i - v_j) / d

    Raises:
        DataError: the agents coincide
    """
    dp = state_i.position - state_j.position
    d = float(np.hypot(dp[0], dp[1]))
    if d == 0.0:
        raise DataError(f"degenerate pair: agents {state_i.agent_id} and {state_j.agent_id} coincide")
    d_dot = float(dp @ (state_i.velocity - state_j.velocity)) / d
    return d, d_dot


def ttc_pair(state_i: AgentState, state_j: AgentState) -> float:
    """-d / d_dot while closing, +inf when separating or parallel."""
    d, d_dot = pair_distance_rate(state_i, state_j)
    if d_dot < 0:
        return -d / d_dot
    return math.inf


def ttc_agent(agent: int, frame_states: Iterable[AgentState], neighbors: Sequence[int]) -> float:
    """Minimum pairwise TTC over the listed neighbors (+inf if none converge)."""
    by_id = {s.agent_id: s for s in frame_states}
    if agent not in by_id:
        raise DataError(f"agent {agent} not present in frame")
    me = by_id[agent]
    values = [ttc_pair(me, by_id[j]) for j in neighbors if j in by_id and j != agent]
    return min(values, default=math.inf)


def _closest_approach(dp: np.ndarray, rel: np.ndarray) -> np.ndarray:
    """-(rel . dp) / |rel|^2, zero where rel vanishes."""
    num = -np.sum(rel * dp, axis=-1)
    den = np.sum(rel * rel, axis=-1)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, 0.0)


def _log_risk(q: np.ndarray, floor: float) -> np.ndarray:
    risk = np.where(q > 0, np.exp(-np.maximum(q, 0.0)), 0.0)
    return np.log(np.maximum(risk, floor))


def risk_pair(
    state_i: AgentState, state_j: AgentState, risk_floor: float = DEFAULT_RISK_FLOOR
) -> tuple[float, float, float, float]:
    """
    Closest-approach times and their log risks.

    Returns:
        (q, q_dot, spr, drv). q is clamped at zero; q_dot is not. Risk is e^-q for
        positive q and 0 otherwise, and the logs are floored at log(risk_floor).
    """
    dp = state_i.position - state_j.position
    q = max(float(_closest_approach(dp, state_i.velocity - state_j.velocity)), 0.0)
    q_dot = float(_closest_approach(dp, state_i.acceleration - state_j.acceleration))
    spr = float(_log_risk(np.asarray(q), risk_floor))
    drv = float(_log_risk(np.asarray(q_dot), risk_floor))
    return q, q_dot, spr, drv


# --- Exposure over a series ---


def _exposed(ttc_series: np.ndarray, ttc_star: float) -> np.ndarray:
    return np.isfinite(ttc_series) & (ttc_series >= 0) & (ttc_series <= ttc_star)


def tet(ttc_series, ttc_star: float = 3.0, tau: float = 0.1) -> float:
    """Time exposed to TTC at or below ``ttc_star``."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    series = np.asarray(ttc_series, dtype=np.float64)
    return float(_exposed(series, ttc_star).sum() * tau)


def tit(ttc_series, ttc_star: float = 3.0, tau: float = 0.1) -> float:
    """Integrated TTC shortfall below ``ttc_star``."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    series = np.asarray(ttc_series, dtype=np.float64)
    gate = _exposed(series, ttc_star)
    return float(np.sum(np.where(gate, ttc_star - np.where(gate, series, 0.0), 0.0)) * tau)


# --- Array kernels ---


def safety_indices_from_arrays(
    positions: np.ndarray,
    velocities: np.ndarray,
    accelerations: np.ndarray,
    mask: np.ndarray,
    config: FeatureConfig | None = None,
    agent_ids: Sequence[int] | None = None,
) -> SafetyIndexSet:
    """
    Safety indices for every agent and frame of dense (agents, frames, 2) arrays.

    Every other present agent counts as a neighbor. TET and TIT accumulate from
    the first frame of the arrays.
    """
    config = config or FeatureConfig()
    n_agents, n_frames = mask.shape
    ttc = np.full((n_agents, n_frames), np.inf)
    spr = np.full((n_agents, n_frames), math.log(config.risk_floor))
    drv = spr.copy()

    for k in range(n_frames):
        present = np.flatnonzero(mask[:, k])
        if present.size < 2:
            continue
        p = positions[present, k]
        v = velocities[present, k]
        a = accelerations[present, k]
        dp = p[:, None, :] - p[None, :, :]
        dv = v[:, None, :] - v[None, :, :]
        da = a[:, None, :] - a[None, :, :]
        d = np.linalg.norm(dp, axis=-1)
        off = ~np.eye(present.size, dtype=bool)
        if np.any(d[off] == 0):
            i, j = np.argwhere((d == 0) & off)[0]
            ids = agent_ids if agent_ids is not None else range(n_agents)
            raise DataError(f"degenerate pair: agents {ids[present[i]]} and {ids[present[j]]} coincide at frame {k}")

        d_safe = np.where(off, d, 1.0)
        d_dot = np.sum(dp * dv, axis=-1) / d_safe
        closing = off & (d_dot < 0)
        pair_ttc = np.where(closing, -d_safe / np.where(closing, d_dot, -1.0), np.inf)
        ttc[present, k] = pair_ttc.min(axis=1)

        nearest = np.argmin(np.where(off, d, np.inf), axis=1)
        rows = np.arange(present.size)
        dp_n, dv_n, da_n = dp[rows, nearest], dv[rows, nearest], da[rows, nearest]
        q = np.maximum(_closest_approach(dp_n, dv_n), 0.0)
        q_dot = _closest_approach(dp_n, da_n)
        spr[present, k] = _log_risk(q, config.risk_floor)
        drv[present, k] = _log_risk(q_dot, config.risk_floor)

    gate = _exposed(ttc, config.ttc_star) & mask
    tet_series = np.cumsum(gate * config.tau, axis=1)
    tit_series = np.cumsum(np.where(gate, config.ttc_star - np.where(gate, ttc, 0.0), 0.0) * config.tau, axis=1)
    return SafetyIndexSet(ttc=ttc, tet=tet_series, tit=tit_series, spr=spr, drv=drv, mask=mask.copy())


def assemble_safety_indices(window: SceneWindow, config: FeatureConfig | None = None) -> SafetyIndexSet:
    """Safety indices over a window's history (all window agents are mutual neighbors)."""
    return safety_indices_from_arrays(
        window.positions,
        window.velocities,
        window.accelerations,
        window.mask,
        config,
        agent_ids=window.agent_ids,
    )
