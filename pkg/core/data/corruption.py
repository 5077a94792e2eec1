"""
Missing-frame and limited-data protocols.

Drop offsets count back from the reference frame t (offset 0 is t itself).
Every variant is centered near t - 10; drop8 sits one frame early to fit.
"""

import logging

import numpy as np

from core.data.types import SceneWindow
from core.errors import DataError, UsageError

logger = logging.getLogger(__name__)

DROP_OFFSETS: dict[str, tuple[int, ...]] = {
    "drop3": tuple(range(9, 12)),
    "drop5": tuple(range(8, 13)),
    "drop8": tuple(range(6, 14)),
}


def drop_frames(window: SceneWindow, variant: str) -> SceneWindow:
    """
    Mark the variant's history offsets missing for every agent.

    Kinematics at the dropped columns are zero-filled. Applying the same variant
    twice gives the same window.

    Raises:
        UsageError: unknown variant
        DataError: history too short for the offsets to stay interior
    """
    if variant not in DROP_OFFSETS:
        raise UsageError(f"unknown drop variant {variant!r}; expected one of {sorted(DROP_OFFSETS)}")
    offsets = DROP_OFFSETS[variant]
    if window.t_h <= max(offsets):
        raise DataError(f"{variant} needs t_h > {max(offsets)}, window has t_h={window.t_h}")

    columns = np.array([window.t_h - o for o in offsets])
    hit = np.zeros_like(window.mask)
    hit[:, columns] = True

    dropped = window.dropped | (hit & window.mask)
    mask = window.mask & ~hit
    keep = mask[..., None]
    return window.evolve(
        mask=mask,
        dropped=dropped,
        positions=np.where(keep, window.positions, 0.0),
        velocities=np.where(keep, window.velocities, 0.0),
        accelerations=np.where(keep, window.accelerations, 0.0),
        lane_ids=np.where(mask, window.lane_ids, -1),
    )


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) of each True run."""
    padded = np.concatenate([[False], flags, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2], strict=True)]


def interpolate_missing(window: SceneWindow) -> SceneWindow:
    """
    Fill dropped runs by per-component linear interpolation.

    A run bounded on both sides by present frames is filled and marked present.
    A run next to a frame where the agent was genuinely absent stays absent.

    Raises:
        DataError: a dropped run touches either end of the history
    """
    if not window.dropped.any():
        return window

    last = window.t_h
    mask = window.mask.copy()
    kin = {
        "positions": window.positions.copy(),
        "velocities": window.velocities.copy(),
        "accelerations": window.accelerations.copy(),
    }
    lane_ids = window.lane_ids.copy()

    for agent in range(window.num_agents):
        for start, end in _runs(window.dropped[agent]):
            if start == 0 or end == last:
                raise DataError(
                    f"agent {window.agent_ids[agent]}: missing run [{start}, {end}] touches the history boundary"
                )
            left, right = start - 1, end + 1
            if not (mask[agent, left] and mask[agent, right]):
                continue
            weights = (np.arange(start, end + 1) - left) / (right - left)
            for arr in kin.values():
                arr[agent, start : end + 1] = (
                    arr[agent, left] + (arr[agent, right] - arr[agent, left]) * weights[:, None]
                )
            lane_ids[agent, start : end + 1] = lane_ids[agent, left]
            mask[agent, start : end + 1] = True

    return window.evolve(mask=mask, dropped=np.zeros_like(mask), lane_ids=lane_ids, **kin)


def subsample_training(windows: list, fraction: float, seed: int) -> list:
    """
    Deterministic uniform sample without replacement of round(fraction * N) windows.

    Original order is preserved; ``fraction == 1`` returns the input unchanged.
    """
    if not 0 < fraction <= 1:
        raise UsageError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1:
        return list(windows)
    size = int(np.floor(fraction * len(windows) + 0.5))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(windows), size=size, replace=False))
    logger.info(f"[DATA] Subsampled {size}/{len(windows)} training windows (fraction={fraction}, seed={seed})")
    return [windows[i] for i in chosen]
