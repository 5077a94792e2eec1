"""Trajectory data: ingestion, windows, corruption protocols and synthetic traffic."""

from core.data.corruption import DROP_OFFSETS, drop_frames, interpolate_missing, subsample_training
from core.data.ingest import parse_trajectory_csv, resample, write_trajectory_csv
from core.data.synthetic import generate_synthetic
from core.data.types import (
    AgentState,
    Lateral,
    Longitudinal,
    ManeuverLabel,
    SceneWindow,
    TrajectoryTable,
)
from core.data.windows import (
    build_scene_windows,
    constant_velocity_extrapolation,
    derive_maneuver_labels,
    split_by_target,
)

__all__ = [
    "DROP_OFFSETS",
    "AgentState",
    "Lateral",
    "Longitudinal",
    "ManeuverLabel",
    "SceneWindow",
    "TrajectoryTable",
    "build_scene_windows",
    "constant_velocity_extrapolation",
    "derive_maneuver_labels",
    "drop_frames",
    "generate_synthetic",
    "interpolate_missing",
    "parse_trajectory_csv",
    "resample",
    "split_by_target",
    "subsample_training",
    "write_trajectory_csv",
]
