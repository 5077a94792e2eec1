"""
Mini-batch training loop, checkpoint writing and checkpoint loading.
"""

import io
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core.config import ExperimentConfig, apply_overrides
from core.data.corruption import subsample_training
from core.data.types import SceneWindow
from core.errors import CheckpointError, DataError, NumericError, UsageError
from core.features.pipeline import FeatureScaler, WindowFeatures, collate, featurize_windows
from core.model.predictor import TrajectoryPredictor, count_parameters
from core.nn.checkpoint import load_parameters, read_manifest, save_checkpoint
from core.nn.layers import parameter
from core.nn.optim import Adam
from core.nn.tensor import Tape
from core.training.losses import combined_loss
from core.training.schedule import lr_schedule
from core.utils import atomic_write_text

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "step", "lr", "loss", "nll", "rmse"]


@dataclass
class TrainResult:
    model: TrajectoryPredictor
    scaler: FeatureScaler
    history: list[dict[str, float]] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def parameter_count(self) -> int:
        return count_parameters(self.model)


def iterate_batches(num_items: int, batch_size: int, rng: np.random.Generator | None = None):
    """Yield index arrays covering ``range(num_items)``; shuffled when ``rng`` is given."""
    order = rng.permutation(num_items) if rng is not None else np.arange(num_items)
    for start in range(0, num_items, batch_size):
        yield order[start : start + batch_size]


def train_on_features(features: Sequence[WindowFeatures], config: ExperimentConfig) -> TrainResult:
    """
    Fit a predictor on already featurized windows.

    Args:
        features: Raw (unstandardized) features of the training split
        config: Experiment configuration

    Returns:
        TrainResult with the trained model, fitted scaler and per-step history

    Raises:
        DataError: empty training set
        NumericError: a batch produced a non-finite loss
    """
    if not features:
        raise DataError("training set is empty")
    tc = config.train
    scaler = FeatureScaler().fit(features)
    standardized = scaler.transform_all(features)

    model = TrajectoryPredictor(config)
    params = model.parameters()
    log_vars = None
    if tc.learned_loss_weights:
        log_vars = parameter(np.zeros(3))
        params = params + [log_vars]
    optimizer = Adam(params, tc.adam_beta1, tc.adam_beta2, tc.adam_eps)
    rng = np.random.default_rng(tc.seed)
    steps_per_epoch = math.ceil(len(standardized) / tc.batch_size)
    logger.info(
        f"[TRAIN] {len(standardized)} windows, {steps_per_epoch} batches/epoch, "
        f"{count_parameters(model)} parameters"
    )

    result = TrainResult(model=model, scaler=scaler)
    step = 0
    for epoch in range(1, tc.epochs + 1):
        losses = []
        for b, indices in enumerate(iterate_batches(len(standardized), tc.batch_size, rng)):
            batch = collate([standardized[i] for i in indices])
            lr = lr_schedule(step, tc, steps_per_epoch)
            optimizer.zero_grad()
            with Tape() as tape:
                output = model(batch)
                loss = combined_loss(output, batch.future, batch.maneuver, tc, log_vars)
                value = loss.total.item()
                if not math.isfinite(value):
                    raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
                tape.backward(loss.total)
            optimizer.step(lr)

            losses.append(value)
            result.history.append(
                {"epoch": epoch, "step": step, "lr": lr, "loss": value, "nll": loss.nll, "rmse": loss.rmse}
            )
            logger.debug(f"[TRAIN] epoch {epoch} batch {b} lr={lr:.3e} loss={value:.4f}")
            step += 1
        result.epoch_losses.append(float(np.mean(losses)))
        logger.info(f"[TRAIN] epoch {epoch}/{tc.epochs} mean loss {result.epoch_losses[-1]:.4f}")
    return result


def train(windows: Sequence[SceneWindow], config: ExperimentConfig, threads: int = 1) -> TrainResult:
    """Subsample (``train.train_fraction``), featurize and fit."""
    if not windows:
        raise DataError("training set is empty")
    chosen = subsample_training(windows, config.train.train_fraction, config.train.seed)
    return train_on_features(featurize_windows(chosen, config, threads), config)


def history_csv(history: Sequence[dict[str, float]]) -> str:
    buffer = io.StringIO()
    pd.DataFrame(list(history), columns=HISTORY_COLUMNS).to_csv(buffer, index=False, float_format="%.10g")
    return buffer.getvalue()


def save_training(result: TrainResult, config: ExperimentConfig, out_dir: str | Path, heldout_targets: Sequence[int] = ()) -> Path:
    """Write ``checkpoint/`` and ``history.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    extra: dict[str, Any] = {
        "config": config.model_dump(mode="json"),
        "feature_stats": result.scaler.to_dict(),
        "projection_seed": config.model.projection_seed,
        "heldout_targets": sorted(int(t) for t in heldout_targets),
    }
    checkpoint = save_checkpoint(out_dir / "checkpoint", result.model, extra)
    atomic_write_text(out_dir / "history.csv", history_csv(result.history))
    return checkpoint


def _stored_config(directory: str | Path, manifest: dict[str, Any]) -> ExperimentConfig:
    if "config" not in manifest:
        raise CheckpointError(f"checkpoint {directory} carries no config")
    try:
        return ExperimentConfig.model_validate(manifest["config"])
    except ValidationError as e:
        raise CheckpointError(f"checkpoint {directory} carries an invalid config: {e}") from e


def checkpoint_config(directory: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """
    The config stored in a checkpoint, with flat overrides applied.

    Raises:
        CheckpointError: missing or invalid stored config
        UsageError: overrides that name unknown keys or fail validation
    """
    stored = _stored_config(directory, read_manifest(directory))
    document = apply_overrides(stored.model_dump(mode="json"), overrides or {})
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e}") from e


def load_predictor(
    directory: str | Path, config: ExperimentConfig | None = None
) -> tuple[TrajectoryPredictor, FeatureScaler, ExperimentConfig, dict[str, Any]]:
    """
    Rebuild a predictor from a checkpoint.

    Args:
        directory: Checkpoint directory
        config: Config to build the model with; defaults to the one stored in the checkpoint

    Raises:
        CheckpointError: missing files, an invalid stored config, or a layout that does not match ``config``
    """
    manifest = read_manifest(directory)
    if config is None:
        config = _stored_config(directory, manifest)
    model = TrajectoryPredictor(config)
    load_parameters(directory, model, manifest)
    scaler = FeatureScaler.from_dict(manifest.get("feature_stats", {}))
    if not scaler.fitted:
        raise CheckpointError(f"checkpoint {directory} carries no feature statistics")
    logger.info(f"[CHECKPOINT] Loaded {count_parameters(model)} parameters from {directory}")
    return model, scaler, config, manifest
