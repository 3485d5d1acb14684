"""Parametric control-affine dynamics and sample-and-hold simulation.

The plant is

    xdot = f(x) + F(x) theta + g(x) u

with the input held constant over each sampling interval of length ``delta``.
Between samples the flow is integrated with classical fixed-step RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, IntegrationBlowupError

__all__ = [
    "SystemModel",
    "ShConfig",
    "StateTrajectory",
    "eval_dynamics",
    "integrate_sh",
    "simulate_open_loop",
]


@dataclass(frozen=True)
class SystemModel:
    """Control-affine parametric model ``(f, F, g)`` with dimensions ``(n, m, p)``.

    ``theta_true`` is the plant's actual parameter. Only the simulator reads
    it; controllers work with an estimate.
    """

    n: int
    m: int
    p: int
    f: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    theta_true: np.ndarray
    name: str = "model"

    def __post_init__(self):
        theta = np.asarray(self.theta_true, dtype=float).reshape(-1)
        if theta.shape != (self.p,):
            raise ConfigurationError(
                f"theta_true has {theta.size} entries, model expects p={self.p}"
            )
        object.__setattr__(self, "theta_true", theta)

    def check_shapes(self, x):
        """Evaluate f, F, g at ``x`` and verify their output shapes."""
        x = np.asarray(x, dtype=float)
        fx = np.asarray(self.f(x), dtype=float)
        Fx = np.asarray(self.F(x), dtype=float)
        gx = np.asarray(self.g(x), dtype=float)
        expected = {"f": (self.n,), "F": (self.n, self.p), "g": (self.n, self.m)}
        for name, val in (("f", fx), ("F", Fx), ("g", gx)):
            if val.shape != expected[name]:
                raise ConfigurationError(
                    f"{self.name}: {name}(x) has shape {val.shape}, expected {expected[name]}"
                )
        return fx, Fx, gx


@dataclass(frozen=True)
class ShConfig:
    """Sampling period and number of RK4 substeps per period."""

    delta: float
    substeps: int = 10

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigurationError(f"substeps must be an integer >= 1, got {self.substeps}")


@dataclass
class StateTrajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    intra_samples: Optional[list] = None

    def append(self, t, x, intra=None):
        if self.times and not t > self.times[-1]:
            raise ValueError("sample times must be strictly increasing")
        self.times.append(float(t))
        self.states.append(np.array(x, dtype=float))
        if intra is not None:
            if self.intra_samples is None:
                self.intra_samples = []
            self.intra_samples.append([np.array(z, dtype=float) for z in intra])

    def as_array(self):
        return np.array(self.times), np.array(self.states)


def _as_vector(v, size, what):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (size,):
        raise ConfigurationError(f"{what} has {v.size} entries, expected {size}")
    return v


def eval_dynamics(model, x, u, theta):
    """Return ``f(x) + F(x) theta + g(x) u``."""
    x = _as_vector(x, model.n, "state")
    u = _as_vector(u, model.m, "input")
    theta = _as_vector(theta, model.p, "parameter")
    fx, Fx, gx = model.check_shapes(x)
    return fx + Fx @ theta + gx @ u


def _rate(model, x, u, theta):
    # Hot path: shapes were validated at the sample instant.
    return model.f(x) + model.F(x) @ theta + model.g(x) @ u


def integrate_sh(model, x_k, u_k, theta, cfg):
    """Integrate one sampling interval with the input held at ``u_k``.

    Returns ``(x_next, intra)`` where ``intra`` lists the state after every
    RK4 substep (its last entry equals ``x_next``).
    """
    x = _as_vector(x_k, model.n, "state")
    u = _as_vector(u_k, model.m, "input")
    theta = _as_vector(theta, model.p, "parameter")
    model.check_shapes(x)
    h = cfg.delta / cfg.substeps
    intra = []
    for _ in range(cfg.substeps):
        with np.errstate(all="ignore"):
            k1 = _rate(model, x, u, theta)
            k2 = _rate(model, x + 0.5 * h * k1, u, theta)
            k3 = _rate(model, x + 0.5 * h * k2, u, theta)
            k4 = _rate(model, x + h * k3, u, theta)
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_new)):
            raise IntegrationBlowupError(
                f"{model.name}: non-finite state during intra-sample integration", x
            )
        x = x_new
        intra.append(x)
    return x, intra


def simulate_open_loop(model, x0, inputs, theta, cfg):
    """Apply a sequence of held inputs and return the sampled trajectory."""
    traj = StateTrajectory()
    x = _as_vector(x0, model.n, "state")
    traj.append(0.0, x, intra=[])
    for k, u in enumerate(inputs):
        x, intra = integrate_sh(model, x, u, theta, cfg)
        traj.append((k + 1) * cfg.delta, x, intra)
    return traj
