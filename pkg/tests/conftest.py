"""
Pytest fixtures and configuration for the test suite.
Provides small deterministic traffic scenes, tiny experiment configs and temporary resources.
"""

import numpy as np
import pandas as pd
import pytest
from freezegun import freeze_time

from core.config import ExperimentConfig
from core.data.types import COLUMNS, SceneWindow, TrajectoryTable
from core.data.windows import build_scene_windows

# --- Environment & Fixture Setup ---


@pytest.fixture(autouse=True)
def setup_env(monkeypatch, tmp_path):
    """Keep process settings and the window cache inside the test's temp dir."""
    monkeypatch.setenv("COGTRAJ_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("COGTRAJ_LOG_LEVEL", "WARNING")
    monkeypatch.delenv("COGTRAJ_THREADS", raising=False)


def make_table(agents: dict[int, dict], frames: int, dt: float = 0.2) -> TrajectoryTable:
    """
    Straight-line motion for each agent.

    ``agents`` maps id -> {"x": x0, "y": y0, "vx": vx, "vy": vy, "lane": lane, "start": first frame}.
    """
    rows = []
    for agent_id, motion in agents.items():
        start = motion.get("start", 0)
        for frame in range(start, start + motion.get("frames", frames)):
            t = (frame - start) * dt
            rows.append(
                (
                    agent_id,
                    frame,
                    motion["x"] + motion["vx"] * t,
                    motion["y"] + motion.get("vy", 0.0) * t,
                    motion["vx"],
                    motion.get("vy", 0.0),
                    0.0,
                    0.0,
                    motion.get("lane", 2),
                )
            )
    return TrajectoryTable(pd.DataFrame(rows, columns=list(COLUMNS)), dt)


@pytest.fixture
def highway_table():
    """Three vehicles on a straight road for 40 frames at 0.2 s; vehicle 2 closes on vehicle 1."""
    return make_table(
        {
            1: {"x": 20.0, "y": 5.625, "vx": 20.0, "lane": 2},
            2: {"x": 0.0, "y": 5.625, "vx": 22.0, "lane": 2},
            3: {"x": 10.0, "y": 1.875, "vx": 22.0, "lane": 1},
        },
        frames=40,
    )


@pytest.fixture
def highway_windows(highway_table):
    """Windows with t_h=15, t_f=5 over the highway table (20 per target)."""
    return build_scene_windows(highway_table, t_h=15, t_f=5, radius=30.0, n_max=2)


@pytest.fixture
def single_window(highway_windows) -> SceneWindow:
    return highway_windows[0]


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """A configuration small enough to train in a unit test."""
    return ExperimentConfig.model_validate(
        {
            "synth": {"num_vehicles": 4, "duration_s": 10.0, "road_length": 120.0, "num_lanes": 2},
            "windows": {"dt": 0.2, "t_h": 15, "t_f": 5, "n_max": 2, "stride": 4},
            "model": {
                "d_model": 8,
                "heads": 2,
                "stream_width": 4,
                "d_z": 8,
                "leanformer_heads": 1,
                "rank": 4,
                "decoder_hidden": 8,
                "group_norm_groups": 2,
            },
            "train": {"epochs": 1, "batch_size": 16, "heldout_fraction": 0.34},
        }
    )


@pytest.fixture(scope="session")
def tiny_overrides() -> list[str]:
    """The tiny config as command-line overrides."""
    return [
        "--synth.num_vehicles", "4",
        "--synth.duration_s", "10",
        "--synth.road_length", "120",
        "--synth.num_lanes", "2",
        "--t_h", "15",
        "--t_f", "5",
        "--n_max", "2",
        "--stride", "4",
        "--d_model", "8",
        "--model.heads", "2",
        "--stream_width", "4",
        "--d_z", "8",
        "--leanformer_heads", "1",
        "--rank", "4",
        "--decoder_hidden", "8",
        "--group_norm_groups", "2",
        "--epochs", "1",
        "--batch_size", "16",
        "--heldout_fraction", "0.34",
    ]  # fmt: skip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- Time Fixtures ---


@pytest.fixture
def frozen_time():
    """Freeze time at a known point for deterministic testing."""
    with freeze_time("2026-02-03 12:00:00") as frozen:
        yield frozen

