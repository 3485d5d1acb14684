"""Actor: choose the held input for the next sampling interval.

Two routes are provided. The default minimises the one-step Bellman target
over a box of admissible inputs; the alternative adjusts a residual offset
on top of the backup law by gradient steps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ControlBox",
    "PolicyParams",
    "ActorConfig",
    "ActorResult",
    "golden_section",
    "bellman_objective",
    "solve_actor",
    "policy_gradient_step",
    "policy_action",
    "sigma_gradient",
]

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ControlBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ConfigurationError("control box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    def clip(self, u):
        return np.clip(np.atleast_1d(np.asarray(u, dtype=float)), self.lower, self.upper)

    def contains(self, u, tol=0.0):
        u = np.atleast_1d(u)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


@dataclass(frozen=True)
class PolicyParams:
    varsigma: np.ndarray
    learning_rate: float

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.varsigma, dtype=float))
        if not np.all(np.isfinite(s)):
            raise ConfigurationError("policy parameters must be finite")
        object.__setattr__(self, "varsigma", s)


@dataclass(frozen=True)
class ActorConfig:
    tol_u: float = 1e-8
    max_iter: int = 200
    sweeps: int = 3


class ActorResult(NamedTuple):
    u: np.ndarray
    value: float
    improved: bool


def golden_section(fun, lo, hi, tol=1e-8, max_iter=200):
    """Golden-section search on ``[lo, hi]``; returns ``(x, f(x))``.

    The endpoints are compared against the interior estimate so that a
    minimum on the boundary is returned exactly.
    """
    a, b = float(lo), float(hi)
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, fun(x)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fun(d)
        it += 1
    best = (c, fc) if fc <= fd else (d, fd)
    for edge in (float(lo), float(hi)):
        fe = fun(edge)
        if fe < best[1]:
            best = (edge, fe)
    return best


def bellman_objective(reg, model, stage_cost, x, w, theta_hat, delta):
    """Return ``u -> r(x, u) + <w, phi(x + delta F(x, u, theta_hat))>``.

    The drift part of the Euler successor is computed once; only the
    input-dependent term changes between evaluations.
    """
    x = np.asarray(x, dtype=float)
    base = x + delta * (model.f(x) + model.F(x) @ theta_hat)
    G = delta * model.g(x)
    w = np.asarray(w, dtype=float)

    def objective(u):
        u = np.atleast_1d(u)
        return float(stage_cost(x, u) + w @ reg.phi(base + G @ u))

    return objective


def _better(cand, best):
    if best is None or cand[1] < best[1]:
        return True
    if cand[1] == best[1]:
        return tuple(cand[0]) < tuple(best[0])
    return False


def solve_actor(reg, model, stage_cost, x, w, theta_hat, delta, box, opt_cfg=None, backup=None):
    """Minimise the Bellman target over ``box``.

    Multistart set: the backup action (when given) and the box midpoint.
    From each start, coordinate-wise golden-section sweeps refine the input;
    the lowest objective wins, ties going to the lexicographically smallest
    input. ``improved`` is False when no refinement beat the best start.
    """
    cfg = opt_cfg or ActorConfig()
    J = bellman_objective(reg, model, stage_cost, x, w, theta_hat, delta)
    seeds = [box.midpoint]
    if backup is not None:
        seeds.insert(0, box.clip(backup))

    best_seed = None
    for s in seeds:
        cand = (s, J(s))
        if _better(cand, best_seed):
            best_seed = cand

    best = best_seed
    m = box.lower.size
    done_1d = False
    for s in seeds:
        if m == 1 and done_1d:
            break
        u = s.copy()
        val = J(u)
        for _ in range(cfg.sweeps if m > 1 else 1):
            for i in range(m):
                def along(t, i=i, u=u):
                    v = u.copy()
                    v[i] = t
                    return J(v)

                t, val = golden_section(along, box.lower[i], box.upper[i], cfg.tol_u, cfg.max_iter)
                u = u.copy()
                u[i] = t
        done_1d = True
        cand = (u, val)
        if _better(cand, best):
            best = cand
    improved = best is not best_seed
    return ActorResult(np.array(best[0], dtype=float), float(best[1]), improved)


def policy_action(params, backup, box):
    """Residual policy ``u = clip(mu + varsigma)``."""
    return box.clip(np.atleast_1d(backup) + params.varsigma)


def sigma_gradient(objective, params, backup, box, h=1e-6):
    """Central-difference gradient of ``objective(policy_action(.))`` in ``varsigma``."""
    grad = np.zeros_like(params.varsigma)
    for i in range(grad.size):
        e = np.zeros_like(grad)
        e[i] = h
        up = objective(policy_action(replace(params, varsigma=params.varsigma + e), backup, box))
        dn = objective(policy_action(replace(params, varsigma=params.varsigma - e), backup, box))
        grad[i] = (up - dn) / (2 * h)
    return grad


def policy_gradient_step(params, grad_J_sigma):
    """``varsigma <- varsigma - l_varsigma * grad``."""
    grad = np.atleast_1d(np.asarray(grad_J_sigma, dtype=float))
    return replace(params, varsigma=params.varsigma - params.learning_rate * grad)
