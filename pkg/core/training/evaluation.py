"""
Evaluation: horizon RMSE reports, missing-frame variants, the constant-velocity
baseline, prediction dumps and the ablation harness.
"""

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from core.config import ExperimentConfig
from core.data.corruption import DROP_OFFSETS, drop_frames, interpolate_missing
from core.data.types import SceneWindow
from core.data.windows import constant_velocity_extrapolation, split_by_target
from core.errors import DataError, UsageError
from core.features.pipeline import FeatureScaler, collate, featurize_windows
from core.model.decoder import MixturePrediction
from core.model.predictor import TrajectoryPredictor, count_parameters
from core.training.losses import rmse_metric
from core.training.trainer import TrainResult, iterate_batches, load_predictor, train

logger = logging.getLogger(__name__)

HORIZONS_S = (1.0, 2.0, 3.0, 4.0, 5.0)
VARIANTS = ("full", *DROP_OFFSETS)
ABLATIONS: dict[str, dict[str, bool]] = {
    "A": {"use_dbp": False},
    "B": {"use_psam": False},
    "C": {"use_relative_priority": False},
    "D": {"use_interaction": False},
    "E": {"use_multimodal": False},
    "F": {},
}


@dataclass(frozen=True)
class EvalReport:
    """RMSE (meters) per horizon (seconds, ascending) for one variant of one model."""

    variant: str
    horizons: tuple[float, ...]
    rmse: tuple[float, ...]
    count: int
    model: str = "F"
    mode_selection: str = "most_probable"
    parameter_count: int | None = None

    @property
    def average_rmse(self) -> float:
        return float(np.mean(self.rmse)) if self.rmse else float("nan")

    def at(self, horizon: float) -> float:
        return self.rmse[self.horizons.index(horizon)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "model": self.model,
            "mode_selection": self.mode_selection,
            "count": self.count,
            "parameter_count": self.parameter_count,
            "horizons_s": list(self.horizons),
            "rmse_m": list(self.rmse),
            "average_rmse_m": self.average_rmse,
        }


@dataclass
class EvaluationRun:
    """An EvalReport plus what produced it."""

    report: EvalReport
    prediction: MixturePrediction | None
    target_ids: tuple[int, ...] = ()
    reference_frames: tuple[int, ...] = ()
    seconds: float = 0.0


def report_horizons(dt: float, t_f: int) -> tuple[float, ...]:
    """Standard horizons that land exactly on a step within the predicted future."""
    out = []
    for h in HORIZONS_S:
        steps = h / dt
        if abs(steps - round(steps)) < 1e-6 and 1 <= round(steps) <= t_f:
            out.append(h)
    return tuple(out)


def variant_tag(variant: str, train_fraction: float = 1.0) -> str:
    """Report label: the drop variant, or the training fraction for a limited-data full run."""
    if variant == "full" and train_fraction < 1.0:
        return f"{train_fraction * 100:g}%"
    return variant


def apply_variant(windows: Sequence[SceneWindow], variant: str) -> list[SceneWindow]:
    """Drop the variant's history frames and interpolate them back (``full`` is the identity)."""
    if variant == "full":
        return list(windows)
    if variant not in DROP_OFFSETS:
        raise UsageError(f"unknown variant {variant!r}; expected one of {list(VARIANTS)}")
    return [interpolate_missing(drop_frames(w, variant)) for w in windows]


def constant_velocity_baseline(window: SceneWindow) -> np.ndarray:
    """The target's last observed velocity held for t_f steps, (t_f, 2)."""
    return constant_velocity_extrapolation(window)


def _report(preds: np.ndarray, gts: np.ndarray, dt: float, variant: str, **kwargs) -> EvalReport:
    horizons = report_horizons(dt, gts.shape[1])
    rmse = tuple(rmse_metric(preds, gts, h, dt) for h in horizons)
    return EvalReport(variant=variant, horizons=horizons, rmse=rmse, count=len(preds), **kwargs)


def evaluate_baseline(windows: Sequence[SceneWindow], variant: str = "full") -> EvaluationRun:
    """Constant-velocity yardstick on the same variant protocol."""
    if not windows:
        raise DataError("no windows to evaluate")
    windows = apply_variant(windows, variant)
    preds = np.stack([constant_velocity_baseline(w) for w in windows])
    gts = np.stack([w.future_positions for w in windows])
    report = _report(preds, gts, windows[0].dt, variant, model="CV", mode_selection="constant_velocity")
    logger.info(f"[EVAL] CV baseline {variant}: {dict(zip(report.horizons, report.rmse))}")
    return EvaluationRun(
        report=report,
        prediction=None,
        target_ids=tuple(w.target_id for w in windows),
        reference_frames=tuple(w.reference_frame for w in windows),
    )


def select_trajectories(prediction: MixturePrediction, gts: np.ndarray, best_of_modes: bool) -> np.ndarray:
    """
    Deterministic trajectory per sample, (B, t_f, 2).

    Default is the most probable mode; ``best_of_modes`` picks the mode with the
    smallest mean displacement from the ground truth.
    """
    if not best_of_modes:
        return prediction.most_probable()
    displacement = np.linalg.norm(prediction.mu - gts[:, None], axis=-1).mean(axis=-1)
    best = np.argmin(displacement, axis=-1)
    return prediction.mu[np.arange(len(prediction)), best]


def _concat_predictions(parts: Sequence[MixturePrediction]) -> MixturePrediction:
    return MixturePrediction(
        weights=np.concatenate([p.weights for p in parts]),
        mu=np.concatenate([p.mu for p in parts]),
        sigma=np.concatenate([p.sigma for p in parts]),
        rho=np.concatenate([p.rho for p in parts]),
    )


def evaluate(
    checkpoint: str | Path | TrainResult,
    windows: Sequence[SceneWindow],
    variant: str = "full",
    config: ExperimentConfig | None = None,
    best_of_modes: bool | None = None,
    threads: int = 1,
    model_label: str = "F",
) -> EvaluationRun:
    """
    Apply a variant protocol, predict and score.

    Args:
        checkpoint: Checkpoint directory, or an in-memory TrainResult
        windows: Evaluation windows (never corrupted in place)
        variant: ``full`` or a drop variant
        config: Model config; defaults to the checkpoint's own
        best_of_modes: Override ``config.train.best_of_modes``
        threads: Featurization workers
        model_label: Model letter written into the report

    Raises:
        CheckpointError: the checkpoint does not match ``config``
        DataError: no windows
    """
    if not windows:
        raise DataError("no windows to evaluate")
    if isinstance(checkpoint, TrainResult):
        if config is None:
            raise UsageError("an in-memory model needs its config")
        model: TrajectoryPredictor = checkpoint.model
        scaler: FeatureScaler = checkpoint.scaler
    else:
        model, scaler, config, _ = load_predictor(checkpoint, config)
    best = config.train.best_of_modes if best_of_modes is None else best_of_modes

    windows = apply_variant(windows, variant)
    features = scaler.transform_all(featurize_windows(windows, config, threads))

    start = time.perf_counter()
    parts = [
        model.predict(collate([features[i] for i in indices]))
        for indices in iterate_batches(len(features), config.train.batch_size)
    ]
    seconds = time.perf_counter() - start
    prediction = _concat_predictions(parts)

    gts = np.stack([f.future for f in features])
    preds = select_trajectories(prediction, gts, best)
    report = _report(
        preds,
        gts,
        windows[0].dt,
        variant_tag(variant, config.train.train_fraction),
        model=model_label,
        mode_selection="best_of_modes" if best else "most_probable",
        parameter_count=count_parameters(model),
    )
    logger.info(f"[EVAL] {model_label} {report.variant}: {dict(zip(report.horizons, report.rmse))} ({seconds:.2f}s)")
    return EvaluationRun(
        report=report,
        prediction=prediction,
        target_ids=tuple(f.target_id for f in features),
        reference_frames=tuple(f.reference_frame for f in features),
        seconds=seconds,
    )


def prediction_rows(run: EvaluationRun) -> list[dict[str, Any]]:
    """One JSON-lines record per window: maneuver table plus per-mode μ/σ/ρ sequences."""
    prediction = run.prediction
    if prediction is None:
        raise DataError("this evaluation produced no mixture predictions")
    rows = []
    for i, (target_id, frame) in enumerate(zip(run.target_ids, run.reference_frames, strict=True)):
        rows.append(
            {
                "target_id": int(target_id),
                "reference_frame": int(frame),
                "maneuver_probs": prediction.maneuver_table(i).tolist(),
                "modes": [
                    {
                        "weight": float(prediction.weights[i, m]),
                        "mu": prediction.mu[i, m].tolist(),
                        "sigma": prediction.sigma[i, m].tolist(),
                        "rho": prediction.rho[i, m].tolist(),
                    }
                    for m in range(prediction.num_modes)
                ],
            }
        )
    return rows


def format_report_table(reports: Sequence[EvalReport], row_label: str = "variant") -> str:
    """
    Aligned text table: one row per report, horizons as columns, then the average.

    ``row_label`` is ``variant`` or ``model``.
    """
    if not reports:
        return ""
    horizons = reports[0].horizons
    header = [row_label, *(f"{h:g}s" for h in horizons), "avg", "n"]
    rows = [
        [
            str(getattr(r, row_label)),
            *(f"{v:.4f}" for v in r.rmse),
            f"{r.average_rmse:.4f}",
            str(r.count),
        ]
        for r in reports
    ]
    widths = [max(len(line[c]) for line in [header, *rows]) for c in range(len(header))]

    def fmt(line: list[str]) -> str:
        return "  ".join(cell.ljust(w) if c == 0 else cell.rjust(w) for c, (cell, w) in enumerate(zip(line, widths)))

    return "\n".join([fmt(header), *(fmt(r) for r in rows)]) + "\n"


def ablation_config(config: ExperimentConfig, letter: str) -> ExperimentConfig:
    """``config`` with the switches of ablation ``letter`` applied (F is the unchanged model)."""
    if letter not in ABLATIONS:
        raise UsageError(f"unknown ablation {letter!r}; expected one of {sorted(ABLATIONS)}")
    flags = {name: True for name in ("use_dbp", "use_psam", "use_relative_priority", "use_interaction", "use_multimodal")}
    flags.update(ABLATIONS[letter])
    return config.model_copy(update={"train": config.train.model_copy(update=flags)})


def run_ablation(
    windows: Sequence[SceneWindow],
    config: ExperimentConfig,
    threads: int = 1,
    letters: Sequence[str] = tuple(ABLATIONS),
) -> dict[str, EvalReport]:
    """
    Train and evaluate each ablation on one target-grouped split.

    Returns:
        Model letter -> held-out EvalReport (variant ``full``)
    """
    train_windows, heldout = split_by_target(windows, config.train.heldout_fraction, config.train.seed)
    if not heldout:
        raise DataError("ablation needs a non-empty held-out split")
    reports = {}
    for letter in letters:
        variant_config = ablation_config(config, letter)
        logger.info(f"[TRAIN] Ablation {letter}: {ABLATIONS[letter] or 'full model'}")
        result = train(train_windows, variant_config, threads)
        run = evaluate(result, heldout, "full", variant_config, threads=threads, model_label=letter)
        reports[letter] = run.report
    return reports
