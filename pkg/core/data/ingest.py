"""
Trajectory log ingestion, resampling and export.

Input schema (header required): ``agent_id,frame,x,y[,vx,vy][,ax,ay][,lane_id]``.
NGSIM-style logs in feet are converted to meters on the way in.
"""

import io
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from core.data.types import COLUMNS, TrajectoryTable
from core.errors import DataError
from core.utils import atomic_write_text

logger = logging.getLogger(__name__)

FEET_TO_METERS = 0.3048
REQUIRED_COLUMNS = ("agent_id", "frame", "x", "y")
OPTIONAL_GROUPS = (("vx", "vy"), ("ax", "ay"), ("lane_id",))


def _check_header(columns: list[str]) -> None:
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise DataError(f"header missing required columns {missing}")
    allowed = set(REQUIRED_COLUMNS) | {c for group in OPTIONAL_GROUPS for c in group}
    unknown = [c for c in columns if c not in allowed]
    if unknown:
        raise DataError(f"header has unknown columns {unknown}")
    for group in OPTIONAL_GROUPS:
        present = [c for c in group if c in columns]
        if present and len(present) != len(group):
            raise DataError(f"header must contain all of {list(group)} or none")


def _to_numeric(raw: pd.DataFrame) -> pd.DataFrame:
    """Convert every column to numbers, naming the first malformed row."""
    out = pd.DataFrame(index=raw.index)
    bad = pd.Series(False, index=raw.index)
    for column in raw.columns:
        values = pd.to_numeric(raw[column].str.strip(), errors="coerce")
        bad |= values.isna()
        out[column] = values
    for column in ("agent_id", "frame", "lane_id"):
        if column in out:
            bad |= out[column].notna() & (out[column] != np.floor(out[column]))
    if bad.any():
        first = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: one for the header, one for 1-based line numbers
        raise DataError(f"malformed row at line {first + 2}")
    return out


def _derive(values: np.ndarray, dt: float) -> np.ndarray:
    """Central differences inside, one-sided at the ends; zeros for a single sample."""
    if len(values) < 2:
        return np.zeros_like(values)
    return np.gradient(values, dt, axis=0)


def parse_trajectory_csv(path: str | Path, unit: str = "meters", dt: float = 0.1) -> TrajectoryTable:
    """
    Read a trajectory CSV into a TrajectoryTable (SI units).

    Args:
        path: CSV file with the documented header
        unit: "meters" or "feet" for all kinematic columns
        dt: Seconds per frame of the log

    Returns:
        TrajectoryTable sorted by (agent_id, frame); velocities and accelerations
        derived by finite differences when the file omits them.
    """
    path = Path(path)
    if unit not in ("meters", "feet"):
        raise DataError(f"unknown unit {unit!r}")
    if not path.exists():
        raise FileNotFoundError(f"trajectory file not found: {path}")

    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise DataError("no records")
    try:
        raw = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise DataError(f"malformed row: {e}") from e
    raw.columns = [c.strip() for c in raw.columns]
    _check_header(list(raw.columns))
    if raw.empty:
        raise DataError("no records")

    df = _to_numeric(raw)
    scale = FEET_TO_METERS if unit == "feet" else 1.0
    for column in ("x", "y", "vx", "vy", "ax", "ay"):
        if column in df:
            df[column] = df[column] * scale

    if "lane_id" not in df:
        df["lane_id"] = -1
    has_velocity = "vx" in df
    has_acceleration = "ax" in df
    for column in ("vx", "vy", "ax", "ay"):
        if column not in df:
            df[column] = 0.0

    # validates uniqueness and contiguity before any differencing
    table = TrajectoryTable(df.loc[:, list(COLUMNS)], dt)
    if has_velocity and has_acceleration:
        logger.info(f"[DATA] Parsed {len(table)} records from {path}")
        return table

    frame_data = table.frame_data.copy()
    for _, index in frame_data.groupby("agent_id").groups.items():
        positions = frame_data.loc[index, ["x", "y"]].to_numpy()
        velocities = frame_data.loc[index, ["vx", "vy"]].to_numpy()
        if not has_velocity:
            velocities = _derive(positions, dt)
            frame_data.loc[index, ["vx", "vy"]] = velocities
        if not has_acceleration:
            frame_data.loc[index, ["ax", "ay"]] = _derive(velocities, dt)

    logger.info(
        f"[DATA] Parsed {len(frame_data)} records from {path} "
        f"(derived: velocity={not has_velocity}, acceleration={not has_acceleration})"
    )
    return TrajectoryTable(frame_data, dt)


def resample(table: TrajectoryTable, target_dt: float) -> TrajectoryTable:
    """
    Keep every k-th frame (k = target_dt / dt) and renumber frames from zero.

    Raises:
        DataError: target_dt is not an integer multiple of the table's dt
    """
    ratio = target_dt / table.dt
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise DataError(f"target_dt={target_dt} is not an integer multiple of dt={table.dt}")
    if k == 1:
        return table

    df = table.frame_data
    f0 = int(df["frame"].min())
    kept = df[(df["frame"] - f0) % k == 0].copy()
    kept["frame"] = (kept["frame"] - f0) // k
    logger.info(f"[DATA] Resampled {len(df)} -> {len(kept)} records (every {k} frames)")
    return TrajectoryTable(kept, target_dt)


def write_trajectory_csv(table: TrajectoryTable, path: str | Path) -> Path:
    """Write a table in meters with the full header, atomically."""
    text = table.frame_data.to_csv(index=False, float_format="%.6f", lineterminator="\n")
    return atomic_write_text(path, text)
