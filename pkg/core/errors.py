"""
Exception hierarchy shared by the library and the command layer.
Command handlers translate these into process exit codes (see core/decorators.py).
"""


class CogtrajError(Exception):
    """Base class for all library errors."""


class UsageError(CogtrajError):
    """Invalid command-line usage or configuration."""


class DataError(CogtrajError):
    """Malformed or unusable input data."""


class CheckpointError(DataError):
    """Checkpoint missing, corrupt, or incompatible with the requested model."""


class NumericError(CogtrajError):
    """Non-finite values, failed convergence, or failed gradient checks."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")
