"""
Utility functions for atomic file output, JSON-lines I/O and hashing.
"""

import hashlib
import json
import logging
import os
import tempfile
from collections.abc import Iterable, Iterator
from datetime import datetime
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    """
    Write bytes to ``path`` via a temp file in the same directory and a rename.

    Args:
        path: Destination file
        payload: Bytes to write

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write UTF-8 text atomically."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(data: Any) -> str:
    """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, data: Any) -> Path:
    """Write a JSON document atomically with canonical formatting."""
    return atomic_write_text(path, dump_json(data))


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> Path:
    """Write one compact JSON object per line, atomically."""
    lines = [json.dumps(row, sort_keys=True, separators=(",", ":")) for row in rows]
    return atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    """Yield objects from a JSON-lines file, skipping blank lines."""
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                yield json.loads(line)


def file_sha256(path: str | Path, extra: str = "") -> str:
    """Hash a file's bytes (plus an optional salt string)."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    digest.update(extra.encode("utf-8"))
    return digest.hexdigest()


def write_effective_config(out_dir: str | Path, command: str, config: dict[str, Any], **extra: Any) -> Path:
    """
    Persist the merged configuration next to a command's outputs.

    The ``created_at`` timestamp is the only field that differs between reruns.
    """
    document = {"command": command, "created_at": datetime.now().isoformat(), "config": config, **extra}
    path = write_json(Path(out_dir) / "effective_config.json", document)
    logger.info(f"[CONFIG] Effective config written to {path}")
    return path
