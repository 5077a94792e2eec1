"""
``synth``: generate a synthetic highway trajectory CSV.
"""

import logging

from commands.common import CommandContext
from core.data import generate_synthetic, write_trajectory_csv
from core.decorators import exit_codes, timed
from core.utils import write_effective_config

logger = logging.getLogger(__name__)


@exit_codes
@timed("SYNTH")
def cmd_synth(ctx: CommandContext) -> None:
    config = ctx.config()
    table = generate_synthetic(config.synth, seed=config.train.seed)
    path = write_trajectory_csv(table, ctx.out / "trajectories.csv")
    write_effective_config(ctx.out, "synth", config.model_dump(mode="json"), seed=config.train.seed)
    logger.info(f"[OK] {len(table.agent_ids())} vehicles written to {path}")


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("synth", parents=list(parents), help="Generate synthetic trajectories")
    parser.set_defaults(handler=cmd_synth)
