"""
``ablation``: train and score models A-F on one split.
"""

import logging

from commands.common import CommandContext, load_windows, write_report_files
from core.decorators import exit_codes, timed
from core.errors import UsageError
from core.training.evaluation import ABLATIONS, run_ablation
from core.utils import write_effective_config

logger = logging.getLogger(__name__)


@exit_codes
@timed("ABLATION")
def cmd_ablation(ctx: CommandContext) -> None:
    letters = [m.strip().upper() for m in ctx.args.models.split(",") if m.strip()]
    unknown = sorted(set(letters) - set(ABLATIONS))
    if unknown or not letters:
        raise UsageError(f"unknown models {unknown}; choose from {sorted(ABLATIONS)}")
    config = ctx.config()
    windows = load_windows(config, ctx.args.data)
    reports = run_ablation(windows, config, ctx.threads, letters)
    write_report_files(ctx.out, "ablation", list(reports.values()), row_label="model")
    write_effective_config(ctx.out, "ablation", config.model_dump(mode="json"), models=letters)


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("ablation", parents=list(parents), help="Ablation study over models A-F")
    parser.add_argument("--data", help="Trajectory CSV (synthesized from the config when omitted)")
    parser.add_argument("--models", default=",".join(ABLATIONS), help="Comma-separated model letters")
    parser.set_defaults(handler=cmd_ablation)
