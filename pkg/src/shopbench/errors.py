"""Exception hierarchy shared across the package."""


class ShopbenchError(Exception):
    """Base class for all package errors."""


class NotationError(ShopbenchError):
    """Problem-classification text could not be parsed.

    Carries the character position and, when known, the tokens that would
    have been accepted at that position.
    """

    def __init__(self, message, position=None, expected=None):
        self.position = position
        self.expected = list(expected) if expected else []
        detail = message
        if position is not None:
            detail += f" (at position {position})"
        if self.expected:
            detail += " (expected: " + ", ".join(self.expected) + ")"
        super().__init__(detail)


class InstanceError(ShopbenchError):
    """Malformed instance data or an instance/shape mismatch."""


class UnsupportedConstraint(ShopbenchError):
    """A constraint tag accepted by the notation but not executable here."""


class SimulationError(ShopbenchError):
    """Engine misuse (advancing a finished run, missing horizon, ...)."""


class IllegalActionError(SimulationError):
    """An action outside the decision point's legal set.

    The engine state is unchanged when this is raised.
    """

    def __init__(self, action, legal):
        self.action = action
        self.legal = list(legal)
        super().__init__(f"illegal action {action!r}; legal: {self.legal!r}")


class ReplayDivergence(ShopbenchError):
    """A recorded action log no longer fits the replayed run."""

    def __init__(self, step, message):
        self.step = step
        super().__init__(f"replay diverged at step {step}: {message}")


class MetricUnavailable(ShopbenchError):
    """A metric cannot be computed from the given record."""


class SearchCapExceeded(ShopbenchError):
    """Exhaustive search aborted: state space above the configured cap."""


class ConfigError(ShopbenchError):
    """Invalid experiment or environment configuration."""


class ProtocolError(ShopbenchError):
    """Wire-protocol violation or version mismatch."""
