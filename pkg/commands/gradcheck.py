"""
``gradcheck``: run the gradient verification suite.
"""

import logging

from commands.common import CommandContext
from core.decorators import exit_codes, timed
from core.errors import NumericError
from core.model.verification import run_gradcheck_suite
from core.utils import write_effective_config, write_json

logger = logging.getLogger(__name__)


@exit_codes
@timed("GRADCHECK")
def cmd_gradcheck(ctx: CommandContext) -> None:
    seed = ctx.seed or 0
    results = run_gradcheck_suite(seed=seed)
    write_json(
        ctx.out / "gradcheck.json",
        {
            "seed": seed,
            "results": [
                {"name": r.name, "max_error": r.max_error, "tolerance": r.tolerance, "passed": r.passed}
                for r in results
            ],
        },
    )
    write_effective_config(ctx.out, "gradcheck", ctx.config().model_dump(mode="json"))
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise NumericError(f"gradient check failed for {', '.join(failed)}")
    logger.info(f"[OK] All {len(results)} gradient checks passed")


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("gradcheck", parents=list(parents), help="Verify analytic gradients against central differences")
    parser.set_defaults(handler=cmd_gradcheck)
