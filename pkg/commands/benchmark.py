"""
``benchmark-attention``: linear versus full attention scaling CSV.
"""

import logging

from commands.common import CommandContext
from core.benchmark import DEFAULT_LENGTHS, attention_scaling, benchmark_csv
from core.decorators import exit_codes, timed
from core.errors import UsageError
from core.utils import atomic_write_text, write_effective_config

logger = logging.getLogger(__name__)


def _lengths(raw: str) -> list[int]:
    try:
        lengths = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"--lengths expects comma-separated integers, got {raw!r}") from e
    if not lengths or min(lengths) < 1:
        raise UsageError("--lengths needs at least one positive length")
    return lengths


@exit_codes
@timed("BENCH")
def cmd_benchmark_attention(ctx: CommandContext) -> None:
    args = ctx.args
    lengths = _lengths(args.lengths)
    if args.rank > min(lengths):
        raise UsageError(f"--rank {args.rank} exceeds the shortest length {min(lengths)}")
    rows = attention_scaling(lengths, k=args.rank, d=args.width, repeats=args.repeats, seed=ctx.seed or 0)
    atomic_write_text(ctx.out / "attention_benchmark.csv", benchmark_csv(rows))
    write_effective_config(
        ctx.out,
        "benchmark-attention",
        ctx.config().model_dump(mode="json"),
        lengths=lengths,
        rank=args.rank,
        width=args.width,
    )


def register(subparsers, parents=()) -> None:
    parser = subparsers.add_parser("benchmark-attention", parents=list(parents), help="Linear vs full attention scaling")
    parser.add_argument("--lengths", default=",".join(str(n) for n in DEFAULT_LENGTHS))
    parser.add_argument("--rank", type=int, default=8)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=3)
    parser.set_defaults(handler=cmd_benchmark_attention)
