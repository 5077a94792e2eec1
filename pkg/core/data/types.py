"""
Domain types for trajectory logs and prediction windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import pandas as pd

from core.errors import DataError

COLUMNS = ("agent_id", "frame", "x", "y", "vx", "vy", "ax", "ay", "lane_id")
KINEMATIC_COLUMNS = ("x", "y", "vx", "vy", "ax", "ay")


def _vec2(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(2)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentState:
    """One agent's kinematic sample at one frame (SI units)."""

    agent_id: int
    frame: int
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(2))
    lane_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "position", _vec2(self.position))
        object.__setattr__(self, "velocity", _vec2(self.velocity))
        object.__setattr__(self, "acceleration", _vec2(self.acceleration))
        if self.frame < 0:
            raise DataError(f"agent {self.agent_id}: negative frame {self.frame}")
        stacked = np.concatenate([self.position, self.velocity, self.acceleration])
        if not np.all(np.isfinite(stacked)):
            raise DataError(f"agent {self.agent_id} frame {self.frame}: non-finite kinematics")


class Lateral(Enum):
    """Lateral maneuver class, ordered left -> right."""

    LEFT = "left"
    KEEP = "keep"
    RIGHT = "right"


class Longitudinal(Enum):
    """Longitudinal maneuver class."""

    ACCELERATE = "accelerate"
    CONSTANT = "constant"
    BRAKE = "brake"


LATERAL_ORDER = (Lateral.LEFT, Lateral.KEEP, Lateral.RIGHT)
LONGITUDINAL_ORDER = (Longitudinal.ACCELERATE, Longitudinal.CONSTANT, Longitudinal.BRAKE)
NUM_MANEUVERS = len(LATERAL_ORDER) * len(LONGITUDINAL_ORDER)


@dataclass(frozen=True)
class ManeuverLabel:
    """Discrete intent: one lateral and one longitudinal class."""

    lateral: Lateral
    longitudinal: Longitudinal

    @property
    def lateral_index(self) -> int:
        return LATERAL_ORDER.index(self.lateral)

    @property
    def longitudinal_index(self) -> int:
        return LONGITUDINAL_ORDER.index(self.longitudinal)

    @property
    def index(self) -> int:
        """Flat mode index, lateral-major."""
        return self.lateral_index * len(LONGITUDINAL_ORDER) + self.longitudinal_index

    @classmethod
    def from_index(cls, index: int) -> ManeuverLabel:
        lat, lon = divmod(index, len(LONGITUDINAL_ORDER))
        return cls(LATERAL_ORDER[lat], LONGITUDINAL_ORDER[lon])


@dataclass(frozen=True, eq=False)
class TrajectoryTable:
    """
    Trajectory log backed by a DataFrame with columns ``COLUMNS``.

    Invariants: (agent_id, frame) unique, frames contiguous per agent,
    kinematics finite, dt > 0. Rows are sorted by (agent_id, frame).
    """

    frame_data: pd.DataFrame
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise DataError(f"dt must be positive, got {self.dt}")
        missing = [c for c in COLUMNS if c not in self.frame_data.columns]
        if missing:
            raise DataError(f"trajectory table missing columns {missing}")
        df = self.frame_data.loc[:, list(COLUMNS)].sort_values(["agent_id", "frame"], kind="mergesort")
        df = df.reset_index(drop=True)
        df = df.astype({"agent_id": "int64", "frame": "int64", "lane_id": "int64"})
        df = df.astype({c: "float64" for c in KINEMATIC_COLUMNS})
        object.__setattr__(self, "frame_data", df)
        self._validate()

    def _validate(self) -> None:
        df = self.frame_data
        if df.empty:
            return
        if (df["frame"] < 0).any():
            raise DataError("negative frame index in trajectory table")
        if not np.isfinite(df.loc[:, list(KINEMATIC_COLUMNS)].to_numpy()).all():
            raise DataError("non-finite kinematics in trajectory table")
        if df.duplicated(["agent_id", "frame"]).any():
            dup = df[df.duplicated(["agent_id", "frame"])].iloc[0]
            raise DataError(f"duplicate record for agent {int(dup.agent_id)} frame {int(dup.frame)}")
        spans = df.groupby("agent_id")["frame"].agg(["min", "max", "count"])
        gaps = spans[spans["max"] - spans["min"] + 1 != spans["count"]]
        if not gaps.empty:
            raise DataError(f"non-contiguous frames for agent {int(gaps.index[0])}")

    @classmethod
    def from_records(cls, records, dt: float) -> TrajectoryTable:
        rows = [
            (
                r.agent_id,
                r.frame,
                *r.position,
                *r.velocity,
                *r.acceleration,
                r.lane_id,
            )
            for r in records
        ]
        return cls(pd.DataFrame(rows, columns=list(COLUMNS)), dt)

    def __len__(self) -> int:
        return len(self.frame_data)

    @property
    def records(self) -> list[AgentState]:
        """All samples as AgentState objects, ordered by (agent_id, frame)."""
        return [
            AgentState(
                int(row.agent_id),
                int(row.frame),
                (row.x, row.y),
                (row.vx, row.vy),
                (row.ax, row.ay),
                int(row.lane_id),
            )
            for row in self.frame_data.itertuples(index=False)
        ]

    def agent_ids(self) -> list[int]:
        return sorted(int(a) for a in self.frame_data["agent_id"].unique())

    def agent_frames(self, agent_id: int) -> pd.DataFrame:
        return self.frame_data[self.frame_data["agent_id"] == agent_id]

    def to_arrays(self) -> TableArrays:
        """Dense (agent, frame) arrays with NaN/-1 where an agent is absent."""
        df = self.frame_data
        agents = np.array(self.agent_ids(), dtype=np.int64)
        if agents.size == 0:
            raise DataError("no records")
        f0, f1 = int(df["frame"].min()), int(df["frame"].max())
        frames = np.arange(f0, f1 + 1)
        row = np.searchsorted(agents, df["agent_id"].to_numpy())
        col = df["frame"].to_numpy() - f0
        shape = (agents.size, frames.size)
        present = np.zeros(shape, dtype=bool)
        present[row, col] = True
        kin = np.full(shape + (6,), np.nan)
        kin[row, col] = df.loc[:, list(KINEMATIC_COLUMNS)].to_numpy()
        lanes = np.full(shape, -1, dtype=np.int64)
        lanes[row, col] = df["lane_id"].to_numpy()
        return TableArrays(agents, frames, kin[..., 0:2], kin[..., 2:4], kin[..., 4:6], lanes, present)


@dataclass(frozen=True, eq=False)
class TableArrays:
    """Dense view of a TrajectoryTable; axis 0 is agents, axis 1 is frames."""

    agent_ids: np.ndarray
    frames: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    lane_ids: np.ndarray
    present: np.ndarray


def _frozen(arr: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SceneWindow:
    """
    One prediction instance, translated so the target sits at the origin at the
    reference frame.

    History arrays are (agents, t_h + 1, ...) with the target in row 0 and
    neighbors nearest-first. Absent samples are zero-filled with mask False.
    ``dropped`` marks samples removed by a missing-frame protocol.
    """

    target_id: int
    reference_frame: int
    agent_ids: tuple[int, ...]
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    lane_ids: np.ndarray
    mask: np.ndarray
    future_positions: np.ndarray
    future_velocities: np.ndarray
    future_accelerations: np.ndarray
    future_lane_ids: np.ndarray
    origin: np.ndarray
    dt: float
    dropped: np.ndarray | None = None

    def __post_init__(self):
        for name in (
            "positions",
            "velocities",
            "accelerations",
            "future_positions",
            "future_velocities",
            "future_accelerations",
            "origin",
        ):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.float64))
        object.__setattr__(self, "lane_ids", _frozen(self.lane_ids, np.int64))
        object.__setattr__(self, "future_lane_ids", _frozen(self.future_lane_ids, np.int64))
        object.__setattr__(self, "mask", _frozen(self.mask, bool))
        dropped = np.zeros_like(self.mask) if self.dropped is None else self.dropped
        object.__setattr__(self, "dropped", _frozen(dropped, bool))
        object.__setattr__(self, "agent_ids", tuple(int(a) for a in self.agent_ids))
        if self.agent_ids[0] != self.target_id:
            raise DataError("target must occupy the first agent row")
        if not (self.mask[0] | self.dropped[0]).all():
            raise DataError(f"target {self.target_id} absent from part of its history")

    @property
    def neighbor_ids(self) -> list[int]:
        return list(self.agent_ids[1:])

    @property
    def num_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def t_h(self) -> int:
        return self.positions.shape[1] - 1

    @property
    def t_f(self) -> int:
        return self.future_positions.shape[0]

    def history_frames(self) -> np.ndarray:
        """Absolute frame index of each history column."""
        return np.arange(self.reference_frame - self.t_h, self.reference_frame + 1)

    def frame_states(self, column: int) -> list[AgentState]:
        """States of all agents present at history column ``column``."""
        frame = int(self.history_frames()[column])
        return [
            AgentState(
                agent_id,
                frame,
                self.positions[i, column],
                self.velocities[i, column],
                self.accelerations[i, column],
                int(self.lane_ids[i, column]),
            )
            for i, agent_id in enumerate(self.agent_ids)
            if self.mask[i, column]
        ]

    def evolve(self, **changes) -> SceneWindow:
        """Copy with replaced fields (the original is never modified)."""
        return replace(self, **changes)
