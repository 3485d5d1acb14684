"""Exception types shared across the package."""

import numpy as np


class StabilRLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StabilRLError, ValueError):
    """Raised for dimension mismatches, invalid options and bad parameter files."""


class IntegrationBlowupError(StabilRLError, FloatingPointError):
    """Raised when the intra-sample integrator produces a non-finite state.

    ``last_state`` holds the last finite state reached before the blowup.
    """

    def __init__(self, message, last_state):
        super().__init__(message)
        self.last_state = np.array(last_state, dtype=float)


class ModelSingularityError(StabilRLError, ArithmeticError):
    """Raised when a model is evaluated where it is undefined (e.g. zero speed)."""


class InfeasibleBoundsError(StabilRLError):
    """Raised when no positive sampling period satisfies the stability constraints."""

    def __init__(self, message, constraint):
        super().__init__(message)
        self.constraint = constraint


class ContainmentError(StabilRLError):
    """Raised when the closed-loop state leaves the overshoot ball."""

    def __init__(self, message, k, state):
        super().__init__(message)
        self.k = k
        self.state = np.array(state, dtype=float)
