"""
JSON-lines cache of built scene windows.

Entries are keyed by a SHA-256 of the source file bytes salted with the
canonical window configuration, so any change to either invalidates the entry.
"""

import json
import logging
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from core.config import WindowConfig
from core.data.types import SceneWindow
from core.utils import file_sha256, read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

_ARRAY_FIELDS = (
    "positions",
    "velocities",
    "accelerations",
    "lane_ids",
    "mask",
    "future_positions",
    "future_velocities",
    "future_accelerations",
    "future_lane_ids",
    "origin",
    "dropped",
)


def window_to_record(window: SceneWindow) -> dict[str, Any]:
    record: dict[str, Any] = {
        "target_id": window.target_id,
        "reference_frame": window.reference_frame,
        "agent_ids": list(window.agent_ids),
        "dt": window.dt,
    }
    for name in _ARRAY_FIELDS:
        record[name] = getattr(window, name).tolist()
    return record


def window_from_record(record: dict[str, Any]) -> SceneWindow:
    arrays = {name: np.asarray(record[name]) for name in _ARRAY_FIELDS}
    return SceneWindow(
        target_id=int(record["target_id"]),
        reference_frame=int(record["reference_frame"]),
        agent_ids=tuple(record["agent_ids"]),
        dt=float(record["dt"]),
        **arrays,
    )


class WindowCache:
    """
    Directory of ``<key>.jsonl`` files, one window per line.

    Disabled caches always miss and never write.
    """

    def __init__(self, directory: str | Path, enabled: bool = True):
        self.directory = Path(directory)
        self.enabled = enabled

    @staticmethod
    def key(source: str | Path, config: WindowConfig) -> str:
        salt = json.dumps(config.model_dump(mode="json"), sort_keys=True)
        return file_sha256(source, salt)

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.jsonl"

    def load(self, key: str) -> list[SceneWindow] | None:
        path = self.path_for(key)
        if not self.enabled or not path.exists():
            logger.debug(f"[CACHE] Miss for {key[:12]}")
            return None
        try:
            windows = [window_from_record(r) for r in read_jsonl(path)]
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            logger.warning(f"[WARN] Ignoring unreadable cache entry {path}: {e}")
            return None
        logger.info(f"[CACHE] Hit for {key[:12]} ({len(windows)} windows)")
        return windows

    def store(self, key: str, windows: Sequence[SceneWindow]) -> Path | None:
        if not self.enabled:
            return None
        path = write_jsonl(self.path_for(key), (window_to_record(w) for w in windows))
        logger.info(f"[CACHE] Stored {len(windows)} windows under {key[:12]}")
        return path

    def get_or_build(
        self, source: str | Path, config: WindowConfig, build: Callable[[], list[SceneWindow]]
    ) -> list[SceneWindow]:
        """Return cached windows for (source, config), building and storing them on a miss."""
        key = self.key(source, config)
        windows = self.load(key)
        if windows is None:
            windows = build()
            self.store(key, windows)
        return windows
