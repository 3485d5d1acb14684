"""Adaptive control Lyapunov function machinery.

Holds the Lyapunov function ``V`` (independent of the parameter), its decay
rate ``nu``, the backup law ``mu``, the adaptation gain ``Gamma`` and the
composite function ``V_c = V + 1/2 theta_tilde' Gamma^-1 theta_tilde``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import ShConfig, eval_dynamics, integrate_sh
from .errors import ConfigurationError, IntegrationBlowupError, ModelSingularityError
from .numerics import invert_monotone

__all__ = [
    "AdaptiveClf",
    "ParameterEstimate",
    "DecayReport",
    "tau_aclf",
    "modified_dynamics",
    "v_c",
    "estimator_energy_change",
    "verify_decay_backup",
]


def _identity(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class AdaptiveClf:
    """Adaptive CLF bundle.

    ``state_error`` maps a state to the coordinates in which balls and the
    bounding functions are measured (the targeted components minus their
    set point). ``q1``/``q2`` bound ``V`` from below/above as functions of
    ``||state_error(x)||``; ``q1_inv``/``q2_inv`` are optional closed forms.
    """

    V: Callable
    grad_V: Callable
    nu: Callable
    mu: Callable
    Gamma: np.ndarray
    q1: Callable[[float], float]
    q2: Callable[[float], float]
    alpha_nu: Callable[[float], float]
    q1_inv: Optional[Callable[[float], float]] = None
    q2_inv: Optional[Callable[[float], float]] = None
    grad_theta_V: Optional[Callable] = None
    state_error: Callable = _identity

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        if G.shape[0] != G.shape[1]:
            raise ConfigurationError("Gamma must be square")
        if not np.allclose(G, G.T):
            raise ConfigurationError("Gamma must be symmetric")
        if np.min(np.linalg.eigvalsh(G)) <= 0:
            raise ConfigurationError("Gamma must be positive definite")
        object.__setattr__(self, "Gamma", G)
        object.__setattr__(self, "_Gamma_inv", np.linalg.inv(G))

    @property
    def Gamma_inv(self):
        return self._Gamma_inv

    def err_norm(self, x):
        return float(np.linalg.norm(self.state_error(x)))

    def inv_q1(self, v):
        if self.q1_inv is not None:
            return self.q1_inv(v)
        return invert_monotone(self.q1, v)

    def inv_q2(self, v):
        if self.q2_inv is not None:
            return self.q2_inv(v)
        return invert_monotone(self.q2, v)

    def q3(self, rho):
        return 0.5 * np.min(np.linalg.eigvalsh(self.Gamma_inv)) * rho**2

    def q4(self, rho):
        return 0.5 * np.max(np.linalg.eigvalsh(self.Gamma_inv)) * rho**2


@dataclass
class ParameterEstimate:
    theta_hat: np.ndarray
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.theta_hat)):
            raise ConfigurationError("parameter estimate must be finite")

    def update(self, new):
        self.history.append(self.theta_hat.copy())
        self.theta_hat = np.asarray(new, dtype=float).reshape(-1)

    def tilde(self, theta_true):
        return np.asarray(theta_true, dtype=float) - self.theta_hat


def tau_aclf(clf, model, x):
    """Estimator regressor ``F(x)^T grad_V(x)``."""
    x = np.asarray(x, dtype=float)
    Fx = np.asarray(model.F(x), dtype=float)
    gV = np.asarray(clf.grad_V(x), dtype=float)
    if Fx.shape != (model.n, model.p) or gV.shape != (model.n,):
        raise ConfigurationError("tau_aclf: dimension mismatch between F(x) and grad_V(x)")
    return Fx.T @ gV


def modified_dynamics(clf, model, x, u, theta):
    """Right-hand side of the modified system with ``theta + Gamma grad_theta V``.

    For a parameter-independent ``V`` (no ``grad_theta_V`` supplied) this
    equals ``eval_dynamics``.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if clf.grad_theta_V is None:
        return eval_dynamics(model, x, u, theta)
    shift = clf.Gamma @ np.asarray(clf.grad_theta_V(np.asarray(x, dtype=float), theta), dtype=float)
    return eval_dynamics(model, x, u, theta + shift)


def v_c(clf, x, theta_tilde):
    theta_tilde = np.asarray(theta_tilde, dtype=float).reshape(-1)
    return float(clf.V(np.asarray(x, dtype=float)) + 0.5 * theta_tilde @ clf.Gamma_inv @ theta_tilde)


def estimator_energy_change(Gamma_inv, theta_tilde, step):
    """Change of ``1/2 tt' Gamma^-1 tt`` when the estimate moves by ``step``.

    Expanded algebraically so it stays accurate when the energy itself is
    large compared with its increment.
    """
    step = np.asarray(step, dtype=float)
    return float(-step @ Gamma_inv @ theta_tilde + 0.5 * step @ Gamma_inv @ step)


@dataclass
class DecayReport:
    delta: float
    checked: int = 0
    skipped_core: int = 0
    violations: list = field(default_factory=list)
    blowups: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations and not self.blowups

    def summary(self):
        return (
            f"delta={self.delta:g} checked={self.checked} core_skipped={self.skipped_core} "
            f"violations={len(self.violations)} blowups={len(self.blowups)}"
        )


def verify_decay_backup(clf, model, x_grid, theta_hat_grid, delta, core_radius=0.0, substeps=10, max_failures=None):
    """Check one backup step on every grid point outside the core ball.

    Each point applies ``u = mu(x, theta_hat)`` over one sampling period of
    the true plant and the discrete estimator update with ``V`` as critic,
    then tests ``Delta V_c <= -(delta/2) nu(x, theta_hat)``. Violations are
    recorded as ``(x, theta_hat, Delta V_c, bound)``; integration failures
    as ``(x, theta_hat, message)``. With ``max_failures`` set the scan
    stops once that many failures have been found.
    """
    cfg = ShConfig(delta, substeps)
    report = DecayReport(delta=delta)
    theta = model.theta_true
    for x in x_grid:
        x = np.asarray(x, dtype=float)
        if clf.err_norm(x) <= core_radius:
            report.skipped_core += 1
            continue
        if max_failures is not None and len(report.violations) + len(report.blowups) >= max_failures:
            break
        tau = tau_aclf(clf, model, x)
        for theta_hat in theta_hat_grid:
            theta_hat = np.asarray(theta_hat, dtype=float)
            report.checked += 1
            u = np.atleast_1d(clf.mu(x, theta_hat))
            try:
                x_next, _ = integrate_sh(model, x, u, theta, cfg)
                dV = float(clf.V(x_next) - clf.V(x))
            except (IntegrationBlowupError, ModelSingularityError) as exc:
                report.blowups.append((x, theta_hat, str(exc)))
                continue
            step = delta * clf.Gamma @ tau
            dVc = dV + estimator_energy_change(clf.Gamma_inv, theta - theta_hat, step)
            bound = -0.5 * delta * float(clf.nu(x, theta_hat))
            if not np.isfinite(dVc) or dVc > bound:
                report.violations.append((x, theta_hat, dVc, bound))
    return report
