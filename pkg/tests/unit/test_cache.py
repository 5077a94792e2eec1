"""
Unit tests for core/cache
Tests window serialization, cache hits and misses, and key invalidation.
"""

import numpy as np
import pytest

from core.cache import get_window_cache, init_window_cache
from core.cache.window_cache import WindowCache, window_from_record, window_to_record
from core.config import WindowConfig

# --- Fixtures ---


@pytest.fixture
def source(tmp_path):
    path = tmp_path / "trajectories.csv"
    path.write_text("id,frame,x,y\n1,0,0.0,0.0\n")
    return path


@pytest.fixture
def cache(tmp_path):
    return WindowCache(tmp_path / "cache")


# --- Records ---


class TestWindowRecords:
    """Test window <-> JSON record conversion."""

    def test_round_trip_preserves_arrays(self, single_window):
        """Test that every array and scalar survives a record round trip."""
        restored = window_from_record(window_to_record(single_window))

        assert restored.target_id == single_window.target_id
        assert restored.agent_ids == single_window.agent_ids
        assert restored.dt == single_window.dt
        np.testing.assert_array_equal(restored.positions, single_window.positions)
        np.testing.assert_array_equal(restored.mask, single_window.mask)
        np.testing.assert_array_equal(restored.future_positions, single_window.future_positions)

    def test_record_is_json_ready(self, single_window):
        """Test that records hold plain lists rather than arrays."""
        record = window_to_record(single_window)

        assert isinstance(record["positions"], list)
        assert isinstance(record["agent_ids"], list)


# --- Cache Behavior ---


class TestWindowCache:
    """Test hits, misses and the disabled mode."""

    def test_miss_builds_and_stores(self, cache, source, highway_windows, mocker):
        """Test that a miss calls the builder once and writes the entry."""
        build = mocker.Mock(return_value=highway_windows[:3])

        windows = cache.get_or_build(source, WindowConfig(), build)

        build.assert_called_once()
        assert len(windows) == 3
        assert cache.path_for(cache.key(source, WindowConfig())).exists()

    def test_hit_skips_builder(self, cache, source, highway_windows, mocker):
        """Test that a second request is served from disk."""
        cache.get_or_build(source, WindowConfig(), lambda: highway_windows[:3])
        build = mocker.Mock()

        windows = cache.get_or_build(source, WindowConfig(), build)

        build.assert_not_called()
        assert [w.target_id for w in windows] == [w.target_id for w in highway_windows[:3]]

    def test_key_changes_with_config(self, source):
        """Test that a different window config gives a different key."""
        assert WindowCache.key(source, WindowConfig()) != WindowCache.key(source, WindowConfig(t_h=10))

    def test_key_changes_with_source(self, source):
        """Test that editing the source file invalidates the key."""
        before = WindowCache.key(source, WindowConfig())
        source.write_text("id,frame,x,y\n1,0,0.0,1.0\n")

        assert WindowCache.key(source, WindowConfig()) != before

    def test_disabled_never_writes(self, tmp_path, source, highway_windows, mocker):
        """Test that a disabled cache always rebuilds and leaves no files."""
        cache = WindowCache(tmp_path / "off", enabled=False)
        build = mocker.Mock(return_value=highway_windows[:1])

        cache.get_or_build(source, WindowConfig(), build)
        cache.get_or_build(source, WindowConfig(), build)

        assert build.call_count == 2
        assert not (tmp_path / "off").exists()

    def test_corrupt_entry_is_a_miss(self, cache, source):
        """Test that an unreadable entry is ignored."""
        key = cache.key(source, WindowConfig())
        cache.path_for(key).parent.mkdir(parents=True)
        cache.path_for(key).write_text("{not json\n")

        assert cache.load(key) is None


class TestCacheManager:
    """Test the process-wide cache accessor."""

    def test_init_and_get(self, tmp_path):
        """Test that init_window_cache registers the shared instance."""
        cache = init_window_cache(tmp_path / "shared", enabled=False)

        assert get_window_cache() is cache
        assert not cache.enabled
