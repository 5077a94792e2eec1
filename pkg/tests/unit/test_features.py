"""
Unit tests for core/features/pooling.py and core/features/pipeline.py
"""

import numpy as np
import pytest

from core.config import ExperimentConfig
from core.data.windows import build_scene_windows
from core.errors import DataError
from core.features.graph import CRITERIA_CHANNELS
from core.features.pipeline import (
    FEATURE_GROUPS,
    FeatureScaler,
    collate,
    featurize_window,
    featurize_windows,
    standardize_features,
)
from core.features.pooling import POOLING_CHANNELS, priority_pooling
from core.features.safety import SAFETY_CHANNELS
from tests.conftest import make_table


@pytest.fixture
def config():
    return ExperimentConfig.model_validate({"windows": {"t_h": 15, "t_f": 5, "n_max": 2}})


class TestPriorityPooling:
    """Test self dynamics and target-relative differences."""

    def test_stationary_agent(self):
        """Test that a parked agent has no self dynamics."""
        table = make_table({1: {"x": 0.0, "y": 0.0, "vx": 0.0}}, frames=8)
        window = build_scene_windows(table, t_h=5, t_f=2, radius=30.0, n_max=0)[0]

        pooled = priority_pooling(window)

        assert not pooled.self_dynamics.any()

    def test_constant_velocity_steps(self, single_window):
        """Test that 20 m/s at 0.2 s moves the target 4 m per frame after the first."""
        pooled = priority_pooling(single_window)

        np.testing.assert_allclose(pooled.self_dynamics[0, 1:, 0], 4.0)
        assert not pooled.self_dynamics[0, 0].any()

    def test_target_relative_to_itself_is_zero(self, single_window):
        """Test that the target row holds only self dynamics."""
        assert not priority_pooling(single_window).pairwise[0].any()

    def test_neighbor_difference(self, single_window):
        """Test that a neighbor's pairwise term is its state minus the target's."""
        pooled = priority_pooling(single_window)

        expected = single_window.positions[1] - single_window.positions[0]
        np.testing.assert_allclose(pooled.pairwise[1, :, :2], expected)

    def test_absolute_variant_adds_origin(self, single_window):
        """Test that the absolute variant reports world positions."""
        pooled = priority_pooling(single_window, relative=False)

        np.testing.assert_allclose(pooled.pairwise[0, -1, :2], single_window.origin)

    def test_channel_count(self, single_window):
        """Test that pooling stacks 12 channels."""
        assert priority_pooling(single_window).as_channels().shape[-1] == len(POOLING_CHANNELS) == 12


class TestFeaturizeWindow:
    """Test per-window feature assembly."""

    def test_shapes_padded_to_slots(self, highway_table, config):
        """Test that a window with fewer agents is padded to n_max + 1 slots."""
        window = build_scene_windows(highway_table, t_h=15, t_f=5, radius=30.0, n_max=1)[0]

        features = featurize_window(window, config)

        assert features.safety.shape == (3, 16, len(SAFETY_CHANNELS))
        assert features.behavior.shape == (3, 16, len(CRITERIA_CHANNELS))
        assert features.pooling.shape == (3, 16, len(POOLING_CHANNELS))
        assert features.adjacency.shape == (16, 3, 3)
        assert features.mask[:2].all() and not features.mask[2].any()
        assert features.anchor.shape == features.future.shape == (5, 2)

    def test_constant_velocity_label(self, single_window, config):
        """Test that straight constant-speed motion is labeled keep/constant (index 4)."""
        assert featurize_window(single_window, config).maneuver == 4

    def test_too_many_agents(self, single_window):
        """Test that a window wider than the configured slots is rejected."""
        narrow = ExperimentConfig.model_validate({"windows": {"n_max": 1}})

        with pytest.raises(DataError, match="n_max"):
            featurize_window(single_window, narrow)

    def test_threads_preserve_order(self, highway_windows, config):
        """Test that the thread pool returns features in input order."""
        windows = highway_windows[:6]

        serial = featurize_windows(windows, config, threads=1)
        pooled = featurize_windows(windows, config, threads=3)

        for a, b in zip(serial, pooled, strict=True):
            assert (a.target_id, a.reference_frame) == (b.target_id, b.reference_frame)
            np.testing.assert_array_equal(a.behavior, b.behavior)


class TestFeatureScaler:
    """Test standardization statistics."""

    @pytest.fixture
    def features(self, highway_windows, config):
        return featurize_windows(highway_windows[::4], config)

    def test_training_data_standardized(self, features):
        """Test that present slots of the training data have mean 0 and std 1 where they vary."""
        scaled = FeatureScaler().fit(features).transform_all(features)

        for name in FEATURE_GROUPS:
            raw = np.concatenate([f.group(name)[f.mask] for f in features])
            rows = np.concatenate([f.group(name)[f.mask] for f in scaled])
            varying = raw.std(axis=0) > 1e-3
            np.testing.assert_allclose(rows.mean(axis=0)[varying], 0.0, atol=1e-9)
            np.testing.assert_allclose(rows.std(axis=0)[varying], 1.0, atol=1e-6)

    def test_constant_channel_uses_floor(self):
        """Test that a zero-variance channel divides by the floor and stays constant."""
        raw = np.full((4, 2), 3.0)

        out = standardize_features(raw, mean=np.array([3.0, 3.0]), std=np.zeros(2))

        assert not out.any()

    def test_sentinel_stays_finite(self, features):
        """Test that the TTC sentinel standardizes to a finite value."""
        scaler = FeatureScaler().fit(features)

        scaled = scaler.transform_all(features)

        assert all(np.isfinite(f.safety).all() for f in scaled)

    def test_absent_slots_stay_zero(self, features, highway_table, config):
        """Test that padded slots remain zero after standardization."""
        narrow = build_scene_windows(highway_table, t_h=15, t_f=5, radius=30.0, n_max=1)[0]
        scaled = FeatureScaler().fit(features).transform(featurize_window(narrow, config))

        assert not scaled.mask.all()
        assert not scaled.safety[~scaled.mask].any()

    def test_missing_stats(self, features):
        """Test that transforming without statistics is an error."""
        with pytest.raises(DataError, match="feature statistics missing"):
            FeatureScaler().transform(features[0])

    def test_fit_empty(self):
        """Test that fitting on nothing is an error."""
        with pytest.raises(DataError):
            FeatureScaler().fit([])

    def test_serialized_stats_restore(self, features):
        """Test that statistics survive to_dict/from_dict."""
        scaler = FeatureScaler().fit(features)

        restored = FeatureScaler.from_dict(scaler.to_dict())

        np.testing.assert_array_equal(restored.transform(features[1]).pooling, scaler.transform(features[1]).pooling)


class TestCollate:
    """Test batching."""

    def test_leading_batch_axis(self, highway_windows, config):
        """Test that collate stacks along a new first axis."""
        batch = collate(featurize_windows(highway_windows[:3], config))

        assert len(batch) == 3
        assert batch.safety.shape[0] == batch.maneuver.shape[0] == 3
        assert batch.target_ids == (1, 1, 1)

    def test_empty(self):
        """Test that an empty batch is rejected."""
        with pytest.raises(DataError):
            collate([])
