"""
``robustness``: full / drop3 / drop5 / drop8 sweep in one table.
"""

import logging

from commands.common import CommandContext, write_report_files
from commands.evaluate import resolve_checkpoint
from core.decorators import exit_codes, timed
from core.training.evaluation import VARIANTS, evaluate, evaluate_baseline, format_report_table
from core.utils import atomic_write_text, write_effective_config, write_json

logger = logging.getLogger(__name__)


@exit_codes
@timed("EVAL")
def cmd_robustness(ctx: CommandContext) -> None:
    loaded, config, windows = resolve_checkpoint(ctx)
    runs = [evaluate(loaded, windows, variant, config, threads=ctx.threads) for variant in VARIANTS]
    reports = [run.report for run in runs]

    baseline = []
    if ctx.args.baseline:
        baseline = [evaluate_baseline(windows, variant).report for variant in VARIANTS]
    write_report_files(ctx.out, "robustness", reports, baseline=[r.to_dict() for r in baseline])
    if baseline:
        atomic_write_text(ctx.out / "robustness_baseline.txt", format_report_table(baseline))
    write_json(ctx.out / "timing.json", {run.report.variant: run.seconds for run in runs})
    write_effective_config(ctx.out, "robustness", config.model_dump(mode="json"), checkpoint=str(ctx.args.checkpoint))


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("robustness", parents=list(parents), help="Missing-frame robustness sweep")
    parser.add_argument("--checkpoint", help="Checkpoint directory")
    parser.add_argument("--data", help="Trajectory CSV (synthesized from the checkpoint config when omitted)")
    parser.add_argument("--baseline", action="store_true", help="Also score the constant-velocity baseline")
    parser.set_defaults(handler=cmd_robustness)
