"""Exception types shared across the package.

The CLI maps these onto process exit codes: I/O failures exit 1,
instance/design validation failures exit 2, search-space refusals exit 3,
and internal consistency failures exit 4.
"""


class RtjsccError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RtjsccError):
    """An instance or design failed validation."""


class NonStochasticRow(ValidationError):
    """A probability row does not sum to 1 within tolerance."""


class NegativeEntry(ValidationError):
    """A probability or distortion entry is negative (or not finite)."""


class DimensionMismatch(ValidationError):
    """Array shapes or per-stage list lengths disagree with the alphabets/horizon."""


class BadHorizon(ValidationError):
    """Horizon is malformed: T < 1, or a discount factor outside (0, 1)."""


class ParseError(ValidationError):
    """An instance or design file could not be parsed."""


class UnknownField(ParseError):
    """A file contains a field the schema does not define (strict schemas)."""


class UncoveredSupportPair(RtjsccError):
    """An encoding rule has no image for a support pair it is applied to."""


class EmptyState(RtjsccError):
    """All atoms of an information state fell below the weight floor."""


class SearchSpaceExceeded(RtjsccError):
    """An enumeration would exceed the configured cap; refuse rather than truncate."""

    def __init__(self, count, cap, what="enumeration"):
        self.count = count
        self.cap = cap
        self.what = what
        super().__init__(f"{what} size {count} exceeds cap {cap}")


class ClosureCapExceeded(RtjsccError):
    """The reachable closure of a stationary design exceeded its cap."""


class InternalError(RtjsccError):
    """An internal invariant failed; indicates a bug, not bad input."""
