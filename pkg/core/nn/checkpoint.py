"""
Checkpoint directories: ``manifest.json`` plus a ``params.bin`` blob.

The blob is little-endian float64, parameters concatenated in manifest order.
"""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from core.errors import CheckpointError
from core.nn.layers import Module
from core.utils import atomic_write_bytes, write_json

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PARAMS_NAME = "params.bin"
_DTYPE = np.dtype("<f8")


def save_checkpoint(directory: str | Path, model: Module, extra: dict[str, Any] | None = None) -> Path:
    """
    Write a model's parameters and metadata.

    Args:
        directory: Destination directory (created if needed)
        model: Module whose named parameters are saved
        extra: Additional manifest entries (config, feature statistics, seeds ...)

    Returns:
        The checkpoint directory
    """
    directory = Path(directory)
    entries = []
    blobs = []
    offset = 0
    for name, param in model.named_parameters():
        entries.append({"name": name, "shape": list(param.shape), "offset": offset, "size": int(param.size)})
        blobs.append(np.ascontiguousarray(param.data, dtype=_DTYPE).tobytes())
        offset += int(param.size)

    manifest = {"format_version": FORMAT_VERSION, "parameters": entries, "parameter_count": offset, **(extra or {})}
    atomic_write_bytes(directory / PARAMS_NAME, b"".join(blobs))
    write_json(directory / MANIFEST_NAME, manifest)
    logger.info(f"[CHECKPOINT] Saved {len(entries)} tensors ({offset} values) to {directory}")
    return directory


def read_manifest(directory: str | Path) -> dict[str, Any]:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise CheckpointError(f"no checkpoint manifest at {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"unreadable checkpoint manifest {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    return manifest


def load_parameters(directory: str | Path, model: Module, manifest: dict[str, Any] | None = None) -> None:
    """
    Copy saved values into ``model``.

    Raises:
        CheckpointError: names, shapes or blob size disagree with the model
    """
    directory = Path(directory)
    manifest = manifest or read_manifest(directory)
    blob_path = directory / PARAMS_NAME
    if not blob_path.exists():
        raise CheckpointError(f"no parameter blob at {blob_path}")
    values = np.frombuffer(blob_path.read_bytes(), dtype=_DTYPE)
    if values.size != manifest["parameter_count"]:
        raise CheckpointError(f"parameter blob holds {values.size} values, manifest expects {manifest['parameter_count']}")

    params = model.named_parameters()
    saved = manifest["parameters"]
    if [name for name, _ in params] != [e["name"] for e in saved]:
        raise CheckpointError("checkpoint parameter names do not match the model")
    for (name, param), entry in zip(params, saved, strict=True):
        if tuple(entry["shape"]) != param.shape:
            raise CheckpointError(f"parameter {name}: checkpoint shape {tuple(entry['shape'])} vs model {param.shape}")
        chunk = values[entry["offset"] : entry["offset"] + entry["size"]]
        param.data = chunk.reshape(param.shape).astype(np.float64)
    logger.info(f"[CHECKPOINT] Loaded {len(params)} tensors from {directory}")
