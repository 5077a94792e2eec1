"""
Per-window featurization, standardization and batching.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
from sklearn.preprocessing import StandardScaler

from core.config import ExperimentConfig
from core.data.types import SceneWindow
from core.data.windows import constant_velocity_extrapolation, derive_maneuver_labels
from core.errors import DataError
from core.features.graph import behavior_from_arrays
from core.features.pooling import priority_pooling
from core.features.safety import assemble_safety_indices

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6
FEATURE_GROUPS = ("safety", "behavior", "pooling")


@dataclass(frozen=True, eq=False)
class WindowFeatures:
    """
    Model inputs for one window, agents padded to ``n_max + 1``.

    Channel arrays are (agents, frames, channels); ``adjacency`` is the per-frame
    normalized distance graph (frames, agents, agents); ``anchor`` is the
    constant-velocity extrapolation of the target and ``future`` its ground truth.
    """

    target_id: int
    reference_frame: int
    safety: np.ndarray
    behavior: np.ndarray
    pooling: np.ndarray
    adjacency: np.ndarray
    mask: np.ndarray
    anchor: np.ndarray
    future: np.ndarray
    maneuver: int

    def group(self, name: str) -> np.ndarray:
        return getattr(self, name)


def _pad(arr: np.ndarray, slots: int, axes: tuple[int, ...] = (0,)) -> np.ndarray:
    widths = [(0, 0)] * arr.ndim
    for axis in axes:
        widths[axis] = (0, slots - arr.shape[axis])
    return np.pad(arr, widths)


def featurize_window(window: SceneWindow, config: ExperimentConfig) -> WindowFeatures:
    """
    Compute every raw feature group for one window.

    Args:
        window: Window whose dropped frames (if any) are already interpolated or left absent
        config: Experiment configuration (features, windows and pooling switch)

    Returns:
        Unstandardized WindowFeatures
    """
    slots = config.windows.n_max + 1
    if window.num_agents > slots:
        raise DataError(f"window has {window.num_agents} agents, more than n_max + 1 = {slots}")

    safety = assemble_safety_indices(window, config.features).as_channels(config.features.ttc_sentinel)
    _, criteria, adjacency = behavior_from_arrays(
        window.positions, window.mask, window.dt, config.features, window.agent_ids
    )
    behavior = np.where(window.mask[..., None], criteria.as_channels(), 0.0)
    pooling = priority_pooling(window, relative=config.train.use_relative_priority).as_channels()
    label = derive_maneuver_labels(
        window,
        left_lane_decreasing=config.windows.left_lane_decreasing,
        lateral_threshold=config.windows.lateral_threshold,
        speed_band=config.windows.speed_band,
    )

    return WindowFeatures(
        target_id=window.target_id,
        reference_frame=window.reference_frame,
        safety=_pad(safety, slots),
        behavior=_pad(behavior, slots),
        pooling=_pad(pooling, slots),
        adjacency=_pad(adjacency, slots, axes=(1, 2)),
        mask=_pad(window.mask, slots),
        anchor=constant_velocity_extrapolation(window),
        future=np.array(window.future_positions),
        maneuver=label.index,
    )


def featurize_windows(windows: Sequence[SceneWindow], config: ExperimentConfig, threads: int = 1) -> list[WindowFeatures]:
    """Featurize many windows, optionally on a thread pool; output order matches input."""
    if threads <= 1 or len(windows) < 2:
        features = [featurize_window(w, config) for w in windows]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            features = list(pool.map(lambda w: featurize_window(w, config), windows))
    logger.info(f"[FEATURES] Featurized {len(features)} windows (threads={threads})")
    return features


def standardize_features(raw: np.ndarray, mean: np.ndarray, std: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """(x - mean) / max(std, 1e-6) per channel; masked slots stay zero."""
    out = (raw - mean) / np.maximum(std, STD_FLOOR)
    if mask is not None:
        out = np.where(mask[..., None], out, 0.0)
    return out


class FeatureScaler:
    """
    Per-channel standardization statistics for the safety, behavior and pooling groups.

    Statistics are fitted on present slots of the training split only and travel
    with the checkpoint.
    """

    def __init__(self, stats: dict[str, tuple[np.ndarray, np.ndarray]] | None = None):
        self.stats = stats or {}

    @property
    def fitted(self) -> bool:
        return all(name in self.stats for name in FEATURE_GROUPS)

    def fit(self, features: Sequence[WindowFeatures]) -> "FeatureScaler":
        if not features:
            raise DataError("cannot fit feature statistics on an empty training set")
        for name in FEATURE_GROUPS:
            rows = np.concatenate([f.group(name)[f.mask] for f in features], axis=0)
            scaler = StandardScaler().fit(rows)
            self.stats[name] = (scaler.mean_.astype(np.float64), np.sqrt(scaler.var_).astype(np.float64))
        logger.info(f"[FEATURES] Fitted standardization on {len(features)} windows")
        return self

    def transform(self, features: WindowFeatures) -> WindowFeatures:
        if not self.fitted:
            raise DataError("feature statistics missing; fit on the training split or load them from a checkpoint")
        changes = {
            name: standardize_features(features.group(name), *self.stats[name], mask=features.mask)
            for name in FEATURE_GROUPS
        }
        return replace(features, **changes)

    def transform_all(self, features: Sequence[WindowFeatures]) -> list[WindowFeatures]:
        return [self.transform(f) for f in features]

    def to_dict(self) -> dict[str, Any]:
        return {name: {"mean": mean.tolist(), "std": std.tolist()} for name, (mean, std) in self.stats.items()}

    @classmethod
    def from_dict(cls, document: dict[str, Any]) -> "FeatureScaler":
        stats = {
            name: (np.asarray(entry["mean"], dtype=np.float64), np.asarray(entry["std"], dtype=np.float64))
            for name, entry in document.items()
        }
        return cls(stats)


@dataclass(frozen=True, eq=False)
class FeatureBatch:
    """Stacked WindowFeatures; every array gains a leading batch axis."""

    safety: np.ndarray
    behavior: np.ndarray
    pooling: np.ndarray
    adjacency: np.ndarray
    mask: np.ndarray
    anchor: np.ndarray
    future: np.ndarray
    maneuver: np.ndarray
    target_ids: tuple[int, ...]
    reference_frames: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.target_ids)


def collate(features: Sequence[WindowFeatures]) -> FeatureBatch:
    if not features:
        raise DataError("cannot collate an empty batch")
    return FeatureBatch(
        safety=np.stack([f.safety for f in features]),
        behavior=np.stack([f.behavior for f in features]),
        pooling=np.stack([f.pooling for f in features]),
        adjacency=np.stack([f.adjacency for f in features]),
        mask=np.stack([f.mask for f in features]),
        anchor=np.stack([f.anchor for f in features]),
        future=np.stack([f.future for f in features]),
        maneuver=np.array([f.maneuver for f in features], dtype=np.int64),
        target_ids=tuple(f.target_id for f in features),
        reference_frames=tuple(f.reference_frame for f in features),
    )
