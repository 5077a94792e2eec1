"""
``eval``: score a checkpoint on one variant.
"""

import logging

from commands.common import CommandContext, load_windows, require_file, write_report_files
from core.config import ExperimentConfig
from core.data.types import SceneWindow
from core.decorators import exit_codes, timed
from core.training.evaluation import VARIANTS, evaluate, prediction_rows
from core.training.trainer import TrainResult, checkpoint_config, load_predictor
from core.utils import write_effective_config, write_json, write_jsonl

logger = logging.getLogger(__name__)


def resolve_checkpoint(ctx: CommandContext) -> tuple[TrainResult, ExperimentConfig, list[SceneWindow]]:
    """
    Load the checkpoint and the windows to score.

    The model config is the checkpoint's own (plus overrides) unless ``--config``
    is given. When the checkpoint records held-out targets, only their windows are
    scored.
    """
    checkpoint = require_file(ctx.args.checkpoint, "checkpoint")
    if ctx.args.config is not None:
        config = ctx.config()
    else:
        config = checkpoint_config(checkpoint, ctx.overrides)
    model, scaler, config, manifest = load_predictor(checkpoint, config)

    windows = load_windows(config, ctx.args.data)
    heldout = set(manifest.get("heldout_targets") or [])
    if heldout:
        chosen = [w for w in windows if w.target_id in heldout]
        if chosen:
            windows = chosen
        else:
            logger.warning("[WARN] No windows of the recorded held-out targets; scoring all windows")
    return TrainResult(model=model, scaler=scaler), config, windows


@exit_codes
@timed("EVAL")
def cmd_eval(ctx: CommandContext) -> None:
    loaded, config, windows = resolve_checkpoint(ctx)
    run = evaluate(
        loaded,
        windows,
        ctx.args.variant,
        config,
        best_of_modes=True if ctx.args.best_of_modes else None,
        threads=ctx.threads,
    )
    write_report_files(ctx.out, "report", [run.report])
    write_json(ctx.out / "timing.json", {"inference_seconds": run.seconds, "windows": run.report.count})
    if ctx.args.dump_predictions:
        write_jsonl(ctx.out / "predictions.jsonl", prediction_rows(run))
    write_effective_config(
        ctx.out, "eval", config.model_dump(mode="json"), checkpoint=str(ctx.args.checkpoint), variant=ctx.args.variant
    )


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("eval", parents=list(parents), help="Evaluate a checkpoint")
    parser.add_argument("--checkpoint", help="Checkpoint directory")
    parser.add_argument("--data", help="Trajectory CSV (synthesized from the checkpoint config when omitted)")
    parser.add_argument("--variant", choices=VARIANTS, default="full")
    parser.add_argument("--best-of-modes", action="store_true", help="Score the best mode instead of the most probable")
    parser.add_argument("--dump-predictions", action="store_true", help="Write predictions.jsonl")
    parser.set_defaults(handler=cmd_eval)
