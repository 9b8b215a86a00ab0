"""Exception types raised across the package."""


class CBBError(Exception):
    """Base class for all package errors."""


class InstanceError(CBBError, ValueError):
    """An instance candidate violates one of the model invariants."""


class ProbabilityMassError(InstanceError):
    pass


class RangeError(InstanceError):
    pass


class DelayError(InstanceError):
    pass


class UnknownName(CBBError, KeyError):
    pass


class ParamError(CBBError, ValueError):
    pass


class TooLargeError(CBBError):
    """Brute-force routine refused an input above its size guard."""


class DomainError(CBBError, ValueError):
    pass


class BlockedPlayError(CBBError, RuntimeError):
    """A policy tried to play an arm that is still blocked."""


class HistoryGapError(CBBError, RuntimeError):
    """A lagged quantity was requested before the history needed for it exists."""


class ConfigError(CBBError, ValueError):
    pass
