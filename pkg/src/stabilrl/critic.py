"""Linear-in-weights critic ``J_hat(x, w) = <w, phi(x)>`` and its update rules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .dynamics import eval_dynamics
from .errors import ConfigurationError

__all__ = [
    "Regressor",
    "WeightSet",
    "CriticState",
    "LsqResult",
    "critic_eval",
    "critic_grad_x",
    "critic_hess_x",
    "euler_successor",
    "bellman_target",
    "lsq_update",
    "gd_update",
    "estimate_lipschitz",
]

RIDGE = 1e-9


@dataclass(frozen=True)
class Regressor:
    """Basis ``phi: R^n -> R^l`` with first and second derivatives.

    ``grad_phi(x)`` has shape ``(l, n)``; ``hess_phi(x)`` has shape
    ``(l, n, n)``. ``phi_sup(rho)`` is an upper bound of ``||phi(x)||`` over
    the ball of radius ``rho`` (in the problem's error coordinates) and
    ``lipschitz_phi`` a Lipschitz constant of ``phi`` on the working ball.
    """

    l: int
    phi: Callable
    grad_phi: Callable
    hess_phi: Callable
    lipschitz_phi: Optional[float] = None
    phi_sup: Optional[Callable[[float], float]] = None


@dataclass(frozen=True)
class WeightSet:
    """Annulus ``w_lower <= ||w|| <= w_upper`` plus the structural subset test."""

    w_lower: float
    w_upper: float
    prime_predicate: Callable[[np.ndarray], bool]
    w_sharp: np.ndarray

    def __post_init__(self):
        if not 0 < self.w_lower <= self.w_upper:
            raise ConfigurationError("weight bounds must satisfy 0 < w_lower <= w_upper")
        ws = np.asarray(self.w_sharp, dtype=float).reshape(-1)
        object.__setattr__(self, "w_sharp", ws)
        if not self.contains(ws):
            raise ConfigurationError("recovery weight w_sharp must lie in the weight set")

    def contains(self, w, tol=1e-12):
        nw = np.linalg.norm(w)
        return self.w_lower - tol <= nw <= self.w_upper + tol

    def in_prime(self, w):
        return bool(self.contains(w) and self.prime_predicate(np.asarray(w, dtype=float)))

    def project(self, w, direction=None):
        """Radially clip ``w`` into the annulus."""
        w = np.asarray(w, dtype=float).reshape(-1)
        nw = np.linalg.norm(w)
        if nw > self.w_upper:
            return w * (self.w_upper / nw)
        if nw < self.w_lower:
            if nw == 0.0:
                d = self.w_sharp if direction is None or not np.any(direction) else direction
                d = np.asarray(d, dtype=float)
                return d * (self.w_lower / np.linalg.norm(d))
            return w * (self.w_lower / nw)
        return w


@dataclass
class CriticState:
    w: np.ndarray
    w_prev: np.ndarray
    learning_rate_w: float

    def __post_init__(self):
        if self.learning_rate_w < 0:
            raise ConfigurationError("learning_rate_w must be nonnegative")


class LsqResult(NamedTuple):
    w: np.ndarray
    raw: np.ndarray
    ok: bool


def critic_eval(reg, w, x):
    return float(np.dot(w, reg.phi(x)))


def critic_grad_x(reg, w, x):
    return np.asarray(reg.grad_phi(x), dtype=float).T @ np.asarray(w, dtype=float)


def critic_hess_x(reg, w, x):
    return np.tensordot(np.asarray(w, dtype=float), np.asarray(reg.hess_phi(x), dtype=float), axes=1)


def euler_successor(model, x, u, theta_hat, delta):
    return np.asarray(x, dtype=float) + delta * eval_dynamics(model, x, u, theta_hat)


def bellman_target(reg, model, stage_cost, x, u, w, theta_hat, delta):
    """``r(x, u) + <w, phi(x + delta F(x, u, theta_hat))>``."""
    x_plus = euler_successor(model, x, u, theta_hat, delta)
    return float(stage_cost(x, u) + np.dot(w, reg.phi(x_plus)))


def lsq_update(reg, model, stage_cost, samples, u_policy, w_init, theta_hat, delta, wset, ridge=RIDGE):
    """Least-squares critic fit over ``samples`` followed by projection onto the weight set.

    The Bellman residual is affine in the weights, so the fit is the linear
    problem ``min_v sum_j (v'(phi(x_j) - phi(x_j+)) - r_j)^2``, solved via
    normal equations with a scale-relative ridge. When the data leave the
    problem undetermined the initial weights are returned with ``ok=False``.
    """
    w_init = np.asarray(w_init, dtype=float)
    if len(samples) == 0:
        raise ConfigurationError("lsq_update needs at least one sample")
    rows, rhs = [], []
    for x in samples:
        u = np.atleast_1d(u_policy(x))
        x_plus = euler_successor(model, x, u, theta_hat, delta)
        rows.append(np.asarray(reg.phi(x), dtype=float) - np.asarray(reg.phi(x_plus), dtype=float))
        rhs.append(stage_cost(x, u))
    A = np.array(rows)
    b = np.array(rhs, dtype=float)
    AtA = A.T @ A
    # The ridge is relative to the mean eigenvalue so that badly scaled
    # features (small residual differences) are not swamped by it.
    lam = ridge * np.trace(AtA) / reg.l
    if lam <= 0 or np.min(np.linalg.eigvalsh(AtA)) <= lam:
        return LsqResult(w_init.copy(), w_init.copy(), False)
    v = np.linalg.solve(AtA + lam * np.eye(reg.l), A.T @ b)
    if not np.all(np.isfinite(v)):
        return LsqResult(w_init.copy(), w_init.copy(), False)
    return LsqResult(wset.project(v, direction=w_init), v, True)


def gd_update(reg, model, stage_cost, x, u, critic_state, theta_hat, delta, wset):
    """One step on the squared temporal-difference error ``e^2 / 2``.

    ``e = J_hat(x, w) - bellman_target(x, u, w)``; its weight gradient is
    ``e (phi(x) - phi(x+))``.
    """
    w = np.asarray(critic_state.w, dtype=float)
    x_plus = euler_successor(model, x, u, theta_hat, delta)
    dphi = np.asarray(reg.phi(x), dtype=float) - np.asarray(reg.phi(x_plus), dtype=float)
    e = float(w @ dphi - stage_cost(x, u))
    return wset.project(w - critic_state.learning_rate_w * e * dphi, direction=w)


def estimate_lipschitz(phi, sampler, n_pairs=100_000, rng=None, safety=1.2):
    """Sampled Lipschitz estimate of ``phi`` scaled by ``safety``.

    ``sampler(rng, k)`` must return ``k`` states from the working ball.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    xs = sampler(rng, n_pairs)
    ys = sampler(rng, n_pairs)
    px = np.array([phi(x) for x in xs], dtype=float)
    py = np.array([phi(y) for y in ys], dtype=float)
    d = np.linalg.norm(xs - ys, axis=1)
    keep = d > 1e-12
    if not np.any(keep):
        return 0.0
    ratios = np.linalg.norm(px - py, axis=1)[keep] / d[keep]
    return safety * float(np.max(ratios))
