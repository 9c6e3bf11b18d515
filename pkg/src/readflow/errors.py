"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (a ``ValueError``),
filesystem problems from :class:`BundleIOError` (an ``OSError``). The CLI maps
the two families onto distinct exit codes.
"""


class ReadflowError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ReadflowError, ValueError):
    pass


class EmptyBundleError(ValidationError):
    pass


class LengthMismatchError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class ValueRangeError(ValidationError):
    pass


class PermutationError(ValidationError):
    pass


class PlanError(ValidationError):
    pass


class OracleLimitError(ValidationError):
    pass


class BundleIOError(ReadflowError, OSError):
    pass


class MissingFileError(BundleIOError, FileNotFoundError):
    pass
