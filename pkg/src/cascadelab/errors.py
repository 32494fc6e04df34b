"""Exception types shared across the package."""

from __future__ import annotations


class CascadeLabError(Exception):
    """Base class for all package errors."""


class SpecError(CascadeLabError):
    """A circuit specification violates a structural invariant."""


class NonFiniteStateError(CascadeLabError):
    """A state vector contains NaN or infinity."""


class InvalidGateError(CascadeLabError):
    """Gate construction with repeated modes or bad coupling."""


class InvalidParameterError(CascadeLabError):
    """Model parameters outside their admissible range."""


class StiffnessError(CascadeLabError):
    """The step size underflowed h_min; carries the last accepted state."""

    def __init__(self, message, t, state):
        super().__init__(message)
        self.t = t
        self.state = state


class DivergenceError(CascadeLabError):
    """The solution left the representable range; carries the last finite state."""

    def __init__(self, message, t, state):
        super().__init__(message)
        self.t = t
        self.state = state


class EventNotFoundError(CascadeLabError):
    """No sign change of the event function before the time budget."""

    def __init__(self, message, budget, trajectory=None):
        super().__init__(message)
        self.budget = budget
        self.trajectory = trajectory


class StageFailureError(CascadeLabError):
    """A pump stage of the staged blowup run missed its threshold in budget."""

    def __init__(self, message, stage):
        super().__init__(message)
        self.stage = stage


class WindowExhaustedError(CascadeLabError):
    """The scale window hit its cap; the run is truncated, not failed."""


class ConfigError(CascadeLabError):
    """Configuration text failed to parse or validate."""
