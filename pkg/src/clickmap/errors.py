"""Shared exception types.

Errors are deliberately loud: silently substituting zeros or empty maps
would corrupt dataset-level averages downstream.
"""


class ClickmapError(Exception):
    """Base class for all package errors."""


class ValidationError(ClickmapError):
    """A value object violates one of its invariants.

    ``problems`` lists every violated invariant, one message each.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DimensionMismatchError(ClickmapError):
    """Two grids/images that must share dimensions do not."""


class EmptyPointSetError(ClickmapError):
    """An operation that needs at least one point got none."""


class ZeroVarianceError(ClickmapError):
    """A constant map reached a z-score or correlation step."""


class SequenceConflictError(ClickmapError):
    """An event batch is not contiguous with the committed log tail."""

    def __init__(self, message, expected_next_seq):
        super().__init__(message)
        self.expected_next_seq = expected_next_seq
