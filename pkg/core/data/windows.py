"""
Prediction-window construction, maneuver labeling and held-out splitting.
"""

import logging

import numpy as np
from sklearn.model_selection import train_test_split

from core.data.types import Lateral, Longitudinal, ManeuverLabel, SceneWindow, TrajectoryTable
from core.errors import UsageError

logger = logging.getLogger(__name__)


def build_scene_windows(
    table: TrajectoryTable,
    t_h: int,
    t_f: int,
    radius: float,
    n_max: int,
    stride: int = 1,
) -> list[SceneWindow]:
    """
    Slice a table into one window per (target, reference frame).

    A reference frame t is valid when the target is present over [t - t_h, t + t_f].
    Neighbors are the agents within ``radius`` of the target at t, nearest first
    (ties broken by agent id), truncated to ``n_max``.

    Args:
        table: Source trajectories
        t_h: History length in frames (the window holds t_h + 1 history frames)
        t_f: Future length in frames
        radius: Neighbor radius in meters
        n_max: Maximum neighbor count
        stride: Step between consecutive reference frames of one target

    Returns:
        Windows ordered by (target_id, reference_frame)
    """
    if t_h < 1 or t_f < 1:
        raise UsageError(f"t_h and t_f must be >= 1, got t_h={t_h}, t_f={t_f}")
    if stride < 1:
        raise UsageError(f"stride must be >= 1, got {stride}")

    arrays = table.to_arrays()
    present = arrays.present
    f0 = int(arrays.frames[0])
    windows: list[SceneWindow] = []

    for row, target_id in enumerate(arrays.agent_ids):
        cols = np.flatnonzero(present[row])
        first, last = int(cols[0]), int(cols[-1])
        for t in range(first + t_h, last - t_f + 1, stride):
            history = slice(t - t_h, t + 1)
            origin = arrays.positions[row, t]

            others = np.flatnonzero(present[:, t])
            others = others[others != row]
            dist = np.linalg.norm(arrays.positions[others, t] - origin, axis=1)
            keep = dist <= radius
            others, dist = others[keep], dist[keep]
            order = np.lexsort((arrays.agent_ids[others], dist))[:n_max]
            rows = np.concatenate([[row], others[order]]).astype(np.int64)

            mask = present[rows, history]
            positions = np.where(mask[..., None], arrays.positions[rows, history] - origin, 0.0)
            velocities = np.where(mask[..., None], arrays.velocities[rows, history], 0.0)
            accelerations = np.where(mask[..., None], arrays.accelerations[rows, history], 0.0)
            lane_ids = np.where(mask, arrays.lane_ids[rows, history], -1)
            future = slice(t + 1, t + t_f + 1)

            windows.append(
                SceneWindow(
                    target_id=int(target_id),
                    reference_frame=f0 + t,
                    agent_ids=tuple(int(a) for a in arrays.agent_ids[rows]),
                    positions=positions,
                    velocities=velocities,
                    accelerations=accelerations,
                    lane_ids=lane_ids,
                    mask=mask,
                    future_positions=arrays.positions[row, future] - origin,
                    future_velocities=arrays.velocities[row, future],
                    future_accelerations=arrays.accelerations[row, future],
                    future_lane_ids=arrays.lane_ids[row, future],
                    origin=origin,
                    dt=table.dt,
                )
            )

    logger.info(f"[DATA] Built {len(windows)} windows from {len(arrays.agent_ids)} agents (t_h={t_h}, t_f={t_f})")
    return windows


def derive_maneuver_labels(
    window: SceneWindow,
    left_lane_decreasing: bool = True,
    lateral_threshold: float = 1.5,
    speed_band: float = 0.05,
) -> ManeuverLabel:
    """
    Label a window's future with a lateral and a longitudinal class.

    Lateral comes from the lane id at t versus t + t_f. When either lane id is
    unknown (-1) the net lateral displacement is compared to ``lateral_threshold``;
    with ``left_lane_decreasing`` a leftward move decreases both lane id and y.
    """
    lane_now = int(window.lane_ids[0, -1])
    lane_end = int(window.future_lane_ids[-1])
    if lane_now >= 0 and lane_end >= 0:
        delta = lane_end - lane_now
    else:
        dy = float(window.future_positions[-1, 1] - window.positions[0, -1, 1])
        delta = 0 if abs(dy) <= lateral_threshold else int(np.sign(dy))

    if delta == 0:
        lateral = Lateral.KEEP
    elif (delta < 0) == left_lane_decreasing:
        lateral = Lateral.LEFT
    else:
        lateral = Lateral.RIGHT

    speed_now = float(np.linalg.norm(window.velocities[0, -1]))
    mean_future = float(np.linalg.norm(window.future_velocities, axis=1).mean())
    if mean_future > speed_now * (1.0 + speed_band):
        longitudinal = Longitudinal.ACCELERATE
    elif mean_future < speed_now * (1.0 - speed_band):
        longitudinal = Longitudinal.BRAKE
    else:
        longitudinal = Longitudinal.CONSTANT
    return ManeuverLabel(lateral, longitudinal)


def split_by_target(
    windows: list[SceneWindow], heldout_fraction: float, seed: int
) -> tuple[list[SceneWindow], list[SceneWindow]]:
    """
    Split windows into (train, held-out) so that no target agent lands on both sides.

    Fewer than two distinct targets, or a zero fraction, puts everything in train.
    """
    targets = sorted({w.target_id for w in windows})
    if heldout_fraction <= 0 or len(targets) < 2:
        return list(windows), []
    _, heldout_ids = train_test_split(targets, test_size=heldout_fraction, random_state=seed, shuffle=True)
    heldout = set(heldout_ids)
    train = [w for w in windows if w.target_id not in heldout]
    held = [w for w in windows if w.target_id in heldout]
    logger.info(f"[DATA] Split {len(windows)} windows: {len(train)} train / {len(held)} held-out ({len(heldout)} targets)")
    return train, held


def constant_velocity_extrapolation(window: SceneWindow) -> np.ndarray:
    """Target positions over the future if it keeps its last observed velocity, (t_f, 2)."""
    steps = np.arange(1, window.t_f + 1, dtype=np.float64)[:, None]
    return window.positions[0, -1] + window.velocities[0, -1] * window.dt * steps
