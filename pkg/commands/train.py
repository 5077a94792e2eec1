"""
``train``: fit a predictor and write its checkpoint and loss history.
"""

import logging

from commands.common import CommandContext, load_windows
from core.data import split_by_target
from core.decorators import exit_codes, timed
from core.training.trainer import save_training, train
from core.utils import write_effective_config, write_json

logger = logging.getLogger(__name__)


@exit_codes
@timed("TRAIN")
def cmd_train(ctx: CommandContext) -> None:
    config = ctx.config()
    windows = load_windows(config, ctx.args.data)
    train_windows, heldout = split_by_target(windows, config.train.heldout_fraction, config.train.seed)
    result = train(train_windows, config, ctx.threads)
    heldout_targets = sorted({w.target_id for w in heldout})
    checkpoint = save_training(result, config, ctx.out, heldout_targets)

    write_json(
        ctx.out / "train_summary.json",
        {
            "windows": len(windows),
            "train_windows": len(train_windows),
            "heldout_windows": len(heldout),
            "parameter_count": result.parameter_count,
            "epoch_losses": result.epoch_losses,
        },
    )
    write_effective_config(
        ctx.out, "train", config.model_dump(mode="json"), data=str(ctx.args.data) if ctx.args.data else None
    )
    logger.info(f"[OK] Checkpoint at {checkpoint} ({result.parameter_count} parameters)")


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("train", parents=list(parents), help="Train a predictor")
    parser.add_argument("--data", help="Trajectory CSV (synthesized from the config when omitted)")
    parser.set_defaults(handler=cmd_train)
