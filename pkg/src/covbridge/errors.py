"""Exception hierarchy shared by the solver layers."""


class BridgeError(Exception):
    """Base class for all errors raised by covbridge."""


class NotPositiveDefinite(BridgeError):
    pass


class DimensionMismatch(BridgeError, ValueError):
    pass


class RankDeficient(BridgeError):
    pass


class NotControllable(BridgeError):
    """Raised when the controllability Gramian over the horizon is singular.

    The ``ratio`` attribute holds the smallest-to-largest eigenvalue ratio
    that failed the check.
    """

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class IntegrationFailure(BridgeError):
    pass


class ConstraintInfeasible(BridgeError):
    pass


class SingularFlow(BridgeError):
    pass


class NoConvergence(BridgeError):
    pass


class InsufficientPaths(BridgeError):
    pass


class ConfigError(BridgeError):
    """Malformed or inconsistent model configuration."""
