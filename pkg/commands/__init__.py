"""
Subcommand registration for the cogtraj CLI.
"""

from commands import ablation, benchmark, evaluate, extract, gradcheck, robustness, synth, train


def register_commands(subparsers, parents=()):
    """Register every subcommand parser; ``parents`` carry the shared global flags."""
    for module in (synth, extract, train, evaluate, robustness, gradcheck, benchmark, ablation):
        module.register(subparsers, parents)
