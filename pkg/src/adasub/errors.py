"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (see cli.EXIT_CODES); library code
raises them directly.
"""


class AdasubError(Exception):
    """Base class for every error this package raises on purpose."""


class MalformedInputError(AdasubError):
    """A file, parameter, or schema field does not satisfy its documented contract."""


class TooLargeError(AdasubError):
    """An exact computation would exceed its enumeration cap."""


class InfeasibleError(AdasubError):
    """The requested target cannot be met on this instance."""


class InconsistentObservationError(AdasubError):
    """A partial realization has zero probability mass under the prior."""


class AlreadyObservedError(AdasubError):
    """An element was observed or conditioned on twice."""


class PolicyBugError(AdasubError):
    """A policy violated the interaction protocol (duplicate select, bad action)."""
