"""Exception types shared across the package."""


class JacobiSpecError(Exception):
    """Base class for all package errors."""


class InvalidInputError(JacobiSpecError):
    """Input contains NaN/Inf or has the wrong shape."""


class SingularBlockError(JacobiSpecError):
    """A coefficient block is numerically singular."""

    def __init__(self, message, smallest_singular_value=None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class DomainError(JacobiSpecError):
    """Argument outside the mathematical domain of the operation."""


class ModelValidationError(JacobiSpecError):
    """An operator family violates the standing hypotheses."""

    def __init__(self, message, report=None, offenders=None):
        super().__init__(message)
        self.report = report
        self.offenders = list(offenders) if offenders else []


class TrackTooShortError(JacobiSpecError):
    """A truncation query needs more solution blocks than the track holds.

    ``needed`` is the smallest index the track must cover for the query
    to succeed, so callers can extend and retry.
    """

    def __init__(self, message, needed):
        super().__init__(message)
        self.needed = int(needed)


class TrackOverflowError(JacobiSpecError):
    """A quantity left float64 range; use the scaled accessors instead."""


class ConvergenceError(JacobiSpecError):
    """An iterative scheme did not meet its tolerance."""

    def __init__(self, message, last_delta=None, depth=None):
        super().__init__(message)
        self.last_delta = last_delta
        self.depth = depth


class TargetUnreachableError(JacobiSpecError):
    """The cutoff equation cannot be satisfied within the track-length cap."""

    def __init__(self, message, attained=None, max_length=None):
        super().__init__(message)
        self.attained = attained
        self.max_length = max_length


class ConfigError(JacobiSpecError):
    """Run configuration is missing, malformed, or has unknown keys."""
