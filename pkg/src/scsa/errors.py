"""Exception hierarchy. CLI exit codes hang off the two middle classes."""
from __future__ import annotations

from contextlib import contextmanager


class ScsaError(Exception):
    """Base class for every error raised by this package."""

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class DataError(ScsaError, ValueError):
    """Bad or inconsistent input data (CLI exit code 2)."""


class NumericError(ScsaError, ArithmeticError):
    """A computation could not produce a finite, well-defined result (exit 3)."""


class ShapeMismatchError(DataError):
    def __init__(self, what: str, left, right):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{what}: shape {self.left} incompatible with {self.right}")


class SemanticError(DataError):
    """Semantic maps that cannot be turned into an aligned label pair."""


class EmptyCorrespondenceError(NumericError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"empty semantic correspondence (attention row {row} has no finite entry)")


@contextmanager
def stage(name: str):
    """Tag any ScsaError escaping the block with the pipeline stage it came from."""
    try:
        yield
    except ScsaError as err:
        if err.stage is None:
            err.stage = name
        raise
