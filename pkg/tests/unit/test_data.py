"""
Unit tests for core/data: ingestion, windowing, labeling, corruption and synthetic traffic.
"""

import numpy as np
import pandas as pd
import pytest

from core.config import SynthConfig
from core.data import (
    DROP_OFFSETS,
    Lateral,
    Longitudinal,
    ManeuverLabel,
    SceneWindow,
    build_scene_windows,
    constant_velocity_extrapolation,
    derive_maneuver_labels,
    drop_frames,
    generate_synthetic,
    interpolate_missing,
    parse_trajectory_csv,
    resample,
    split_by_target,
    subsample_training,
)
from core.data.types import TrajectoryTable
from core.errors import DataError, UsageError
from tests.conftest import make_table


def make_window(xs, lane_now=2, lane_end=2, future_speed=None, speed=10.0, t_f=3) -> SceneWindow:
    """A target-only window moving along x with the given history positions."""
    xs = np.asarray(xs, dtype=np.float64)
    n = len(xs)
    positions = np.stack([xs, np.zeros(n)], axis=-1)[None]
    velocities = np.tile([speed, 0.0], (1, n, 1))
    future_speed = speed if future_speed is None else future_speed
    steps = np.arange(1, t_f + 1)[:, None]
    return SceneWindow(
        target_id=1,
        reference_frame=n - 1,
        agent_ids=(1,),
        positions=positions,
        velocities=velocities,
        accelerations=np.zeros((1, n, 2)),
        lane_ids=np.full((1, n), lane_now),
        mask=np.ones((1, n), dtype=bool),
        future_positions=np.hstack([xs[-1] + future_speed * 0.2 * steps, np.zeros((t_f, 1))]),
        future_velocities=np.tile([future_speed, 0.0], (t_f, 1)),
        future_accelerations=np.zeros((t_f, 2)),
        future_lane_ids=np.full(t_f, lane_end),
        origin=np.zeros(2),
        dt=0.2,
    )


# --- Ingestion ---


class TestParseTrajectoryCsv:
    """Test CSV ingestion, unit handling and derived kinematics."""

    def test_feet_converted_to_meters(self, tmp_path):
        """Test that feet positions are converted with the exact factor."""
        path = tmp_path / "log.csv"
        path.write_text("agent_id,frame,x,y\n1,0,10.0,5.0\n")

        table = parse_trajectory_csv(path, unit="feet")

        record = table.records()[0]
        np.testing.assert_allclose(record.position, [3.048, 1.524])

    def test_empty_file_rejected(self, tmp_path):
        """Test that an empty file is reported as having no records."""
        path = tmp_path / "empty.csv"
        path.write_text("")

        with pytest.raises(DataError, match="no records"):
            parse_trajectory_csv(path)

    def test_velocity_derived_by_central_difference(self, tmp_path):
        """Test that missing velocities come from central differences."""
        path = tmp_path / "log.csv"
        path.write_text("agent_id,frame,x,y\n1,0,0,0\n1,1,2,0\n1,2,4,0\n")

        table = parse_trajectory_csv(path, dt=0.2)

        assert table.records()[1].velocity[0] == pytest.approx(10.0)

    def test_malformed_row_names_line(self, tmp_path):
        """Test that a non-numeric cell is reported with its line number."""
        path = tmp_path / "log.csv"
        path.write_text("agent_id,frame,x,y\n1,0,0,0\n1,1,abc,0\n")

        with pytest.raises(DataError, match="line 3"):
            parse_trajectory_csv(path)

    def test_non_contiguous_frames_name_agent(self, tmp_path):
        """Test that a gap in an agent's frames is rejected."""
        path = tmp_path / "log.csv"
        path.write_text("agent_id,frame,x,y\n7,0,0,0\n7,2,1,0\n")

        with pytest.raises(DataError, match="agent 7"):
            parse_trajectory_csv(path)

    def test_partial_optional_group_rejected(self, tmp_path):
        """Test that a header with vx but no vy is rejected."""
        path = tmp_path / "log.csv"
        path.write_text("agent_id,frame,x,y,vx\n1,0,0,0,1\n")

        with pytest.raises(DataError, match="all of"):
            parse_trajectory_csv(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing path raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            parse_trajectory_csv(tmp_path / "nope.csv")

    def test_unknown_unit(self, tmp_path):
        """Test that an unknown unit is a data error."""
        with pytest.raises(DataError):
            parse_trajectory_csv(tmp_path / "log.csv", unit="furlongs")


class TestResample:
    """Test frame-rate reduction."""

    def _table(self, frames: int, dt: float) -> TrajectoryTable:
        return make_table({1: {"x": 0.0, "y": 0.0, "vx": 10.0}}, frames=frames, dt=dt)

    def test_every_second_frame_kept(self):
        """Test that 0.1 s -> 0.2 s keeps every other frame and renumbers."""
        table = self._table(10, 0.1)

        out = resample(table, 0.2)

        assert out.dt == 0.2
        assert list(out.frame_data["frame"]) == [0, 1, 2, 3, 4]
        np.testing.assert_allclose(out.frame_data["x"], table.frame_data["x"].to_numpy()[::2])

    def test_same_rate_is_identity(self):
        """Test that resampling to the same dt returns the table unchanged."""
        table = self._table(5, 0.2)

        assert resample(table, 0.2) is table

    def test_non_integer_ratio_rejected(self):
        """Test that 0.1 s -> 0.25 s is an error."""
        with pytest.raises(DataError, match="integer multiple"):
            resample(self._table(10, 0.1), 0.25)


# --- Windows ---


class TestBuildSceneWindows:
    """Test window slicing and neighbor selection."""

    def test_window_count_single_agent(self):
        """Test that 100 frames with t_h=15, t_f=25 give 60 windows without neighbors."""
        table = make_table({1: {"x": 0.0, "y": 0.0, "vx": 10.0}}, frames=100)

        windows = build_scene_windows(table, t_h=15, t_f=25, radius=30.0, n_max=12)

        assert len(windows) == 60
        assert all(w.num_agents == 1 for w in windows)
        assert windows[0].reference_frame == 15

    def test_two_agents_see_each_other(self):
        """Test that agents 10 m apart list each other as neighbors."""
        table = make_table({1: {"x": 0.0, "y": 0.0, "vx": 10.0}, 2: {"x": 10.0, "y": 0.0, "vx": 10.0}}, frames=3)

        windows = build_scene_windows(table, t_h=1, t_f=1, radius=30.0, n_max=12)

        assert {w.target_id: w.neighbor_ids for w in windows} == {1: [2], 2: [1]}

    def test_nearest_n_max_retained(self):
        """Test that only the n_max nearest agents within the radius are kept."""
        agents = {i: {"x": 2.0 * i, "y": 0.0, "vx": 0.0} for i in range(20)}
        table = make_table(agents, frames=3)

        windows = build_scene_windows(table, t_h=1, t_f=1, radius=30.0, n_max=12)

        target_zero = next(w for w in windows if w.target_id == 0)
        assert target_zero.agent_ids == tuple(range(13))

    def test_target_centered_at_reference_frame(self, highway_windows):
        """Test that the target sits at the origin at the last history frame."""
        window = highway_windows[0]

        np.testing.assert_allclose(window.positions[0, -1], [0.0, 0.0])
        assert window.positions.shape == (3, 16, 2)
        assert window.future_positions.shape == (5, 2)
        # target 1 moves at 20 m/s: 4 m per 0.2 s step
        np.testing.assert_allclose(window.future_positions[:, 0], [4.0, 8.0, 12.0, 16.0, 20.0])

    def test_neighbors_ordered_nearest_first(self, highway_windows):
        """Test that the lane-1 vehicle (closer) precedes the same-lane follower."""
        assert highway_windows[0].agent_ids == (1, 3, 2)

    def test_invalid_lengths_rejected(self, highway_table):
        """Test that t_h=0 is a usage error."""
        with pytest.raises(UsageError):
            build_scene_windows(highway_table, t_h=0, t_f=5, radius=30.0, n_max=2)


class TestManeuverLabels:
    """Test lateral and longitudinal labeling."""

    def test_lane_decrease_is_left(self):
        """Test that lane 2 -> lane 1 is a left change with decreasing lane ids."""
        label = derive_maneuver_labels(make_window(np.arange(16.0), lane_now=2, lane_end=1))

        assert label.lateral is Lateral.LEFT

    def test_lane_convention_flips(self):
        """Test that the same move is right when lane ids increase to the left."""
        label = derive_maneuver_labels(make_window(np.arange(16.0), lane_now=2, lane_end=1), left_lane_decreasing=False)

        assert label.lateral is Lateral.RIGHT

    def test_constant_velocity_is_keep_constant(self):
        """Test that a constant-velocity future is labeled keep/constant."""
        label = derive_maneuver_labels(make_window(np.arange(16.0)))

        assert label == ManeuverLabel(Lateral.KEEP, Longitudinal.CONSTANT)

    def test_faster_future_is_accelerate(self):
        """Test that doubling speed is labeled accelerate."""
        label = derive_maneuver_labels(make_window(np.arange(16.0), speed=10.0, future_speed=20.0))

        assert label.longitudinal is Longitudinal.ACCELERATE

    def test_slower_future_is_brake(self):
        """Test that halving speed is labeled brake."""
        label = derive_maneuver_labels(make_window(np.arange(16.0), speed=10.0, future_speed=5.0))

        assert label.longitudinal is Longitudinal.BRAKE

    def test_index_round_trip(self):
        """Test that the flat index is lateral-major and invertible."""
        label = ManeuverLabel(Lateral.RIGHT, Longitudinal.CONSTANT)

        assert label.index == 7
        assert ManeuverLabel.from_index(7) == label


class TestSplitByTarget:
    """Test the held-out split."""

    def test_targets_never_straddle(self, highway_windows):
        """Test that no target appears on both sides of the split."""
        train, heldout = split_by_target(highway_windows, 0.34, seed=0)

        assert heldout
        assert not {w.target_id for w in train} & {w.target_id for w in heldout}
        assert len(train) + len(heldout) == len(highway_windows)

    def test_zero_fraction_keeps_everything(self, highway_windows):
        """Test that a zero held-out fraction returns all windows for training."""
        train, heldout = split_by_target(highway_windows, 0.0, seed=0)

        assert len(train) == len(highway_windows)
        assert heldout == []


class TestConstantVelocityExtrapolation:
    """Test the constant-velocity anchor."""

    def test_two_meters_per_step(self):
        """Test that v=(10,0) at dt=0.2 advances 2 m per step."""
        window = make_window(np.arange(16.0) * 2.0, speed=10.0)

        out = constant_velocity_extrapolation(window)

        np.testing.assert_allclose(np.diff(out[:, 0]), [2.0, 2.0])
        assert out[0, 0] == pytest.approx(32.0)

    def test_stationary_target(self):
        """Test that a stationary target stays put."""
        window = make_window(np.full(16, 3.0), speed=0.0)

        np.testing.assert_allclose(constant_velocity_extrapolation(window), [[3.0, 0.0]] * 3)


# --- Corruption protocols ---


class TestDropFrames:
    """Test the missing-frame variants."""

    def test_drop5_offsets(self, single_window):
        """Test that drop5 removes offsets 8..12 for every agent."""
        out = drop_frames(single_window, "drop5")

        missing = np.flatnonzero(~out.mask[0])
        assert list(single_window.t_h - missing) == [12, 11, 10, 9, 8]
        assert out.dropped[:, missing].all()

    def test_drop3_offsets(self):
        """Test that drop3 sits at offsets 9..11."""
        assert DROP_OFFSETS["drop3"] == (9, 10, 11)

    def test_idempotent(self, single_window):
        """Test that dropping twice equals dropping once."""
        once = drop_frames(single_window, "drop5")
        twice = drop_frames(once, "drop5")

        np.testing.assert_array_equal(once.mask, twice.mask)
        np.testing.assert_array_equal(once.positions, twice.positions)

    def test_original_untouched(self, single_window):
        """Test that the input window is not modified."""
        drop_frames(single_window, "drop8")

        assert single_window.mask.all()

    def test_short_history_rejected(self):
        """Test that drop8 needs a history longer than its largest offset."""
        with pytest.raises(DataError, match="t_h"):
            drop_frames(make_window(np.arange(10.0)), "drop8")

    def test_unknown_variant(self, single_window):
        """Test that an unknown variant is a usage error."""
        with pytest.raises(UsageError):
            drop_frames(single_window, "drop4")


class TestInterpolateMissing:
    """Test linear reconstruction of dropped runs."""

    def test_fills_linearly(self):
        """Test that 0 and 10 m with four missing frames fill as 2, 4, 6, 8."""
        xs = np.array([0.0, -1, -1, -1, -1, 10.0, 12.0, 14.0])
        window = make_window(xs)
        mask = np.ones((1, 8), dtype=bool)
        mask[0, 1:5] = False
        window = window.evolve(mask=mask, dropped=~mask)

        out = interpolate_missing(window)

        np.testing.assert_allclose(out.positions[0, :6, 0], [0, 2, 4, 6, 8, 10])
        assert out.mask.all()
        assert not out.dropped.any()

    def test_no_missing_is_identity(self, single_window):
        """Test that a clean window comes back unchanged."""
        assert interpolate_missing(single_window) is single_window

    def test_linear_motion_reconstructed_exactly(self, highway_windows):
        """Test that straight-line trajectories survive drop8 + interpolation."""
        for window in highway_windows[:5]:
            out = interpolate_missing(drop_frames(window, "drop8"))
            np.testing.assert_allclose(out.positions, window.positions, atol=1e-9)
            np.testing.assert_allclose(out.velocities, window.velocities, atol=1e-9)

    def test_run_touching_boundary_rejected(self):
        """Test that a dropped run at the first history frame is an error."""
        window = make_window(np.arange(8.0))
        mask = np.ones((1, 8), dtype=bool)
        mask[0, 0:2] = False
        window = window.evolve(mask=mask, dropped=~mask)

        with pytest.raises(DataError, match="boundary"):
            interpolate_missing(window)


class TestSubsampleTraining:
    """Test the limited-data protocol."""

    def test_quarter_of_thousand(self):
        """Test that f=0.25 keeps 250 of 1000 windows in original order."""
        out = subsample_training(list(range(1000)), 0.25, seed=3)

        assert len(out) == 250
        assert out == sorted(out)

    def test_full_fraction_is_identity(self):
        """Test that f=1 keeps every window."""
        assert subsample_training([3, 1, 2], 1.0, seed=0) == [3, 1, 2]

    def test_deterministic(self):
        """Test that the same seed picks the same subset."""
        assert subsample_training(list(range(100)), 0.3, seed=9) == subsample_training(list(range(100)), 0.3, seed=9)

    def test_invalid_fraction(self):
        """Test that f=0 is a usage error."""
        with pytest.raises(UsageError):
            subsample_training([1, 2], 0.0, seed=0)


# --- Synthetic traffic ---


class TestGenerateSynthetic:
    """Test the highway generator."""

    def test_free_vehicle_reaches_desired_speed(self):
        """Test that a lone vehicle converges to its desired speed."""
        config = SynthConfig(
            num_vehicles=1, duration_s=120.0, desired_speed_min=25.0, desired_speed_max=25.0, lane_change_rate=0.0
        )

        table = generate_synthetic(config, seed=0)

        final = table.frame_data.iloc[-1]
        assert final["vx"] == pytest.approx(25.0, abs=1e-3)

    def test_same_seed_identical(self):
        """Test that equal seeds give bit-identical tables."""
        config = SynthConfig(num_vehicles=6, duration_s=5.0)

        pd.testing.assert_frame_equal(
            generate_synthetic(config, seed=4).frame_data, generate_synthetic(config, seed=4).frame_data
        )

    def test_lane_change_changes_lane(self):
        """Test that a forced lane change shows up in lane ids and y."""
        config = SynthConfig(num_vehicles=1, num_lanes=2, duration_s=6.0, lane_change_rate=100.0)

        table = generate_synthetic(config, seed=0)

        assert table.frame_data["lane_id"].nunique() == 2
        assert table.frame_data["y"].max() - table.frame_data["y"].min() > 3.0

    def test_infeasible_density(self):
        """Test that too many vehicles for the road is a data error."""
        config = SynthConfig(num_vehicles=30, num_lanes=1, road_length=50.0)

        with pytest.raises(DataError, match="infeasible density"):
            generate_synthetic(config, seed=0)

    def test_no_vehicle_overlap(self):
        """Test that same-lane vehicles keep at least a vehicle length apart."""
        config = SynthConfig(num_vehicles=9, num_lanes=3, duration_s=20.0, lane_change_rate=0.0)

        df = generate_synthetic(config, seed=2).frame_data

        for _, frame in df.groupby(["frame", "lane_id"]):
            xs = np.sort(frame["x"].to_numpy())
            assert np.all(np.diff(xs) >= config.vehicle_length)
