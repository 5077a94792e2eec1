"""
Window cache manager.
"""

import logging

from core.cache.window_cache import WindowCache, window_from_record, window_to_record

logger = logging.getLogger(__name__)

_cache: WindowCache | None = None


def init_window_cache(directory, enabled: bool = True) -> WindowCache:
    """Initialize the process-wide window cache."""
    global _cache
    _cache = WindowCache(directory, enabled)
    logger.info(f"[INIT] Window cache at {directory} (enabled={enabled})")
    return _cache


def get_window_cache() -> WindowCache | None:
    return _cache


__all__ = ["WindowCache", "get_window_cache", "init_window_cache", "window_from_record", "window_to_record"]
