"""Exception hierarchy shared by every dstcnet module.

The CLI maps these onto exit codes: anything derived from :class:`DstcError`
exits 1, plain I/O failures (``OSError``) exit 2.
"""


class DstcError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(DstcError):
    """A documented precondition was violated by the caller."""


class DimensionError(DstcError):
    """Operand shapes are incompatible; the message names both shapes."""


class DegenerateInputError(DstcError):
    """Input is structurally valid but has no usable content (e.g. fully masked)."""


class RangeError(DstcError):
    """An index or time span lies outside the valid range."""


class FormatError(DstcError):
    """A file's bytes do not conform to the expected layout."""
