"""Learning loop with stability supervision.

Each sampling instant: fit the critic, let the actor propose an input,
test the three learning conditions (decay along the estimated model, a
small weight step, structural weight membership) and fall back to the
backup pair ``(mu, w_sharp)`` on failure or inside the core ball. The
parameter estimate is then advanced with the accepted critic and the
input is held over one sampling interval of the true plant.
"""

from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .actor import ActorConfig, PolicyParams, bellman_objective, policy_action, policy_gradient_step, sigma_gradient, solve_actor
from .aclf import estimator_energy_change, verify_decay_backup
from .critic import CriticState, critic_eval, critic_grad_x, estimate_lipschitz, gd_update, lsq_update
from .dynamics import ShConfig, eval_dynamics, integrate_sh
from .errors import ConfigurationError, ContainmentError, InfeasibleBoundsError
from .numerics import fd_jacobian, invert_monotone

log = logging.getLogger(__name__)

__all__ = [
    "StabilityBounds",
    "StepRecord",
    "TrajectoryLog",
    "LoopConfig",
    "LoopState",
    "compute_bounds",
    "check_conditions",
    "init_loop",
    "step",
    "run",
    "calvc_increments",
]

SAFETY = 1.2
OVERSHOOT_MARGIN = 1.5
# Candidate periods for the empirical backup bound, 1e-4 * 2**j up to ~100.
DELTA_A_LADDER = tuple(1e-4 * 2.0**j for j in range(21))


@dataclass(frozen=True)
class StabilityBounds:
    R: float
    r: float
    R_star: float
    r_star: float
    v_star: float
    J_bar: float
    F_bar: float
    tau_bar: float
    phi_bar: float
    phi_bar_1: float
    phi_bar_2: float
    L_F: float
    L_phi: float
    nu_bar: float
    Delta_bar: float
    delta_a: float
    delta_bar: float
    delta: float
    eps1_bar: float
    epsw_bar: float
    delta_constraints: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)

    @property
    def delta_ok(self):
        return 0 < self.delta <= self.delta_bar

    def report(self):
        keys = [
            "R", "r", "R_star", "r_star", "v_star", "J_bar", "F_bar", "tau_bar", "phi_bar",
            "phi_bar_1", "phi_bar_2", "L_F", "L_phi", "nu_bar", "Delta_bar", "delta_a",
            "delta_bar", "delta", "eps1_bar", "epsw_bar",
        ]
        lines = [f"{k} = {float(getattr(self, k))!r}" for k in keys]
        lines += [f"delta_limit_{k} = {float(v)!r}" for k, v in self.delta_constraints.items()]
        lines.append(f"delta_ok = {self.delta_ok}")
        return "\n".join(lines)


@dataclass(frozen=True)
class StepRecord:
    k: int
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    theta_hat: np.ndarray
    cond_decay: bool
    cond_wstep: bool
    cond_wprime: bool
    fallback: bool
    in_core: bool
    stage_cost_value: float
    V_c_value: float
    calV_c_value: float


@dataclass
class TrajectoryLog:
    problem: str
    delta: float
    records: list = field(default_factory=list)
    intra_err_max: list = field(default_factory=list)
    final_x: Optional[np.ndarray] = None
    final_theta_hat: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(rec, name) for rec in self.records])

    def reach_time(self, err_norms, r):
        """First sample index with error norm ``<= r`` (None if never)."""
        hits = np.flatnonzero(np.asarray(err_norms) <= r)
        return int(hits[0]) if hits.size else None

    def hold_time(self, err_norms, r, intra=True):
        """First ``K`` after which every later sample (and intra-sample point) stays in the ball."""
        e = np.asarray(err_norms, dtype=float)
        inside = e <= r
        if intra and self.intra_err_max:
            # Step k covers the open interval after sample k.
            inside = inside & (np.asarray(self.intra_err_max) <= r)
        if not inside.size or not inside[-1]:
            return None
        bad = np.flatnonzero(~inside)
        return int(bad[-1] + 1) if bad.size else 0


@dataclass(frozen=True)
class LoopConfig:
    delta: float
    horizon: int
    update_mode: str = "gd"
    actor_mode: str = "optimize"
    M: int = 1
    l_w: float = 1e-6
    l_sigma: float = 1e-3
    substeps: int = 10
    backup_only: bool = False
    check_containment: bool = True
    actor: ActorConfig = ActorConfig()

    def __post_init__(self):
        if self.update_mode not in ("lsq", "gd"):
            raise ConfigurationError(f"update_mode must be 'lsq' or 'gd', got {self.update_mode!r}")
        if self.actor_mode not in ("optimize", "policy_gradient"):
            raise ConfigurationError(f"actor_mode must be 'optimize' or 'policy_gradient', got {self.actor_mode!r}")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.M < 1:
            raise ConfigurationError("M must be >= 1")


@dataclass
class LoopState:
    problem: object
    bounds: StabilityBounds
    cfg: LoopConfig
    k: int
    x: np.ndarray
    theta_hat: np.ndarray
    w: np.ndarray
    u_prev: Optional[np.ndarray]
    buffer: deque
    policy: Optional[PolicyParams] = None


# -- bounds ---------------------------------------------------------------


def _sup_phi_norm(problem, rho):
    if problem.reg.phi_sup is not None:
        return float(problem.reg.phi_sup(rho))
    return max(np.linalg.norm(problem.reg.phi(x)) for x in problem.ball_grid(rho))


def _box_corners(box):
    axes = [(lo, hi) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.lower.size)
    return mesh


def _theta_corners(theta_set):
    lo, hi = theta_set
    axes = [(a, b) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def certification_grid(problem, n_err=10, n_aux=5):
    """Grid of states on which the backup step is certified.

    Uses the problem's ``cert_ranges`` (per state index) when present,
    otherwise the ball of radius ``R``.
    """
    ranges = problem.cert_ranges
    if not ranges:
        return problem.ball_grid(problem.R, n_err=n_err, n_aux=n_aux)
    axes = []
    for i in range(problem.model.n):
        lo, hi = ranges[i]
        axes.append(np.linspace(lo, hi, n_err if i in problem.index_set_I else n_aux))
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, problem.model.n)


def find_delta_a(problem, r_star, candidates, substeps=10):
    """Largest candidate period for which the backup certificate holds on the grid."""
    grid = certification_grid(problem)
    thetas = problem.theta_grid()
    for d in sorted(candidates, reverse=True):
        rep = verify_decay_backup(
            problem.clf, problem.model, grid, thetas, d, core_radius=r_star, substeps=substeps, max_failures=1
        )
        if rep.ok:
            return float(d)
    return 0.0


def compute_bounds(problem, delta_requested, n_err=41, n_aux=9, delta_a=None, substeps=10):
    """Estimate every constant of the sampled stability argument.

    Sups are taken over deterministic grids (``n_err`` points per targeted
    coordinate, ``n_aux`` per remaining coordinate, box and parameter-set
    corners, which is exact in ``u`` and ``theta`` because the dynamics are
    affine in both) and inflated by a safety factor of 1.2. Weight-set sups
    are over the admissible weights (norm at most ``w_upper``); lower
    bounds on the critic come from the Lyapunov function, which every
    accepted weight dominates.
    """
    model, clf, reg, wset = problem.model, problem.clf, problem.reg, problem.wset
    idx = list(problem.index_set_I)
    R, r = problem.R, problem.r
    w_bar = wset.w_upper

    def q2_J(rho):
        return w_bar * _sup_phi_norm(problem, rho)

    v_star = float(clf.q1(r))
    r_star = float(invert_monotone(q2_J, v_star / 2.0, hi=r))
    J_bar = q2_J(R)
    R_star = float(clf.inv_q1(OVERSHOOT_MARGIN * J_bar))
    if not r_star < r < R < R_star:
        raise InfeasibleBoundsError(
            f"ball ordering violated: r*={r_star}, r={r}, R={R}, R*={R_star}", "ball_ordering"
        )

    grid = problem.ball_grid(R_star, n_err=n_err, n_aux=n_aux)
    us = _box_corners(problem.box)
    thetas = _theta_corners(problem.theta_set)

    F_sup = 0.0
    L_F = 0.0
    tau_sup = phi_sup = phi1 = phi2 = 0.0
    for x in grid:
        fx, Fx, gx = model.check_shapes(x)
        Jf = fd_jacobian(lambda z: model.f(z), x)
        JF = [fd_jacobian(lambda z, j=j: model.F(z)[:, j], x) for j in range(model.p)]
        Jg = [fd_jacobian(lambda z, j=j: model.g(z)[:, j], x) for j in range(model.m)]
        for u in us:
            for th in thetas:
                rate = fx + Fx @ th + gx @ u
                F_sup = max(F_sup, np.linalg.norm(rate[idx]))
                jac = Jf + sum(t * J for t, J in zip(th, JF)) + sum(ui * J for ui, J in zip(u, Jg))
                L_F = max(L_F, np.linalg.norm(jac[idx], 2))
        gphi = np.atleast_2d(reg.grad_phi(x))
        A = Fx.T @ gphi.T
        tau_sup = max(tau_sup, w_bar * np.linalg.norm(A, 2))
        phi_sup = max(phi_sup, np.linalg.norm(reg.phi(x)))
        phi1 = max(phi1, w_bar * np.linalg.norm(gphi, 2))
        H = np.asarray(reg.hess_phi(x))
        phi2 = max(phi2, w_bar * np.sqrt(sum(np.linalg.norm(Hi, 2) ** 2 for Hi in H)))

    F_bar = float(SAFETY * F_sup)
    L_F = float(SAFETY * L_F)
    tau_bar = float(SAFETY * tau_sup)
    phi_bar = float(SAFETY * phi_sup)
    phi_bar_1 = float(SAFETY * phi1)
    phi_bar_2 = float(SAFETY * phi2)

    if callable(reg.lipschitz_phi):
        L_phi = float(reg.lipschitz_phi(R_star))
    elif reg.lipschitz_phi is not None:
        L_phi = float(reg.lipschitz_phi)
    else:
        L_phi = estimate_lipschitz(reg.phi, lambda rng, k: problem.sample_ball(rng, k, R_star))

    rhos = np.linspace(r_star, R_star, 1001)
    nu_bar = float(min(0.5 * clf.alpha_nu(rho) for rho in rhos))
    Gamma_norm = np.linalg.norm(clf.Gamma, 2)
    Gamma_norm = float(Gamma_norm)
    Delta_bar = phi_bar_1 * L_F * F_bar + 0.5 * tau_bar**2 * Gamma_norm + 0.5 * F_bar**2 * phi_bar_2

    if delta_a is None:
        cands = DELTA_A_LADDER
        delta_a = find_delta_a(problem, r_star, cands, substeps=substeps)

    slope = w_bar * L_phi * F_bar
    limits = {
        "delta_a": float(delta_a),
        "core_hold": float(v_star / (4.0 * slope)),
        "overshoot": float((clf.q1(R_star) - J_bar) / slope),
        "decay": float(nu_bar / (10.0 * Delta_bar)),
    }
    for name, val in limits.items():
        if not val > 0:
            raise InfeasibleBoundsError(f"no positive sampling period satisfies '{name}' ({val})", name)
    delta_bar = min(limits.values())

    eps1_bar = 2.0 * nu_bar / 5.0 * delta_requested
    epsw_bar = eps1_bar / phi_bar
    bounds = StabilityBounds(
        R=R, r=r, R_star=R_star, r_star=r_star, v_star=v_star, J_bar=J_bar,
        F_bar=F_bar, tau_bar=tau_bar, phi_bar=phi_bar, phi_bar_1=phi_bar_1,
        phi_bar_2=phi_bar_2, L_F=L_F, L_phi=L_phi, nu_bar=nu_bar, Delta_bar=Delta_bar,
        delta_a=float(delta_a), delta_bar=delta_bar, delta=float(delta_requested),
        eps1_bar=eps1_bar, epsw_bar=epsw_bar, delta_constraints=limits,
        resolution={"n_err": n_err, "n_aux": n_aux, "safety": SAFETY, "grid_points": len(grid)},
    )
    if not bounds.delta_ok:
        warnings.warn(
            f"{problem.name}: sampling period {delta_requested} exceeds the certified bound "
            f"{delta_bar:.3e}; the per-step decay checks remain active",
            RuntimeWarning,
            stacklevel=2,
        )
    return bounds


# -- per-step logic -------------------------------------------------------


def check_conditions(reg, clf, model, bounds, x_k, u_k, w_k, w_prev, theta_hat, delta, wset=None):
    """Return the decay, weight-step and weight-membership flags."""
    grad = critic_grad_x(reg, w_k, x_k)
    lhs = float(grad @ (delta * eval_dynamics(model, x_k, u_k, theta_hat)))
    decay = lhs <= -0.5 * delta * float(clf.nu(x_k, theta_hat)) + bounds.eps1_bar
    wstep = float(np.linalg.norm(np.asarray(w_k) - np.asarray(w_prev))) <= bounds.epsw_bar
    if wset is None:
        wprime = True
    else:
        wprime = wset.in_prime(w_k)
    return bool(decay), bool(wstep), bool(wprime)


def init_loop(problem, bounds, cfg, x0, theta_hat0=None, w0=None, varsigma0=None):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (problem.model.n,):
        raise ConfigurationError(f"x0 has {x0.size} entries, expected {problem.model.n}")
    th = problem.defaults["theta_hat0"] if theta_hat0 is None else theta_hat0
    w = problem.defaults["w0"] if w0 is None else w0
    w = np.asarray(w, dtype=float).reshape(-1)
    if not problem.wset.in_prime(w):
        raise ConfigurationError("initial critic weights must lie in the structural weight set")
    policy = None
    if cfg.actor_mode == "policy_gradient":
        sig = np.zeros(problem.model.m) if varsigma0 is None else varsigma0
        policy = PolicyParams(sig, cfg.l_sigma)
    return LoopState(
        problem=problem, bounds=bounds, cfg=cfg, k=0, x=x0,
        theta_hat=np.asarray(th, dtype=float).copy(), w=w.copy(), u_prev=None,
        buffer=deque(maxlen=cfg.M), policy=policy,
    )


def step(state):
    """Advance the closed loop by one sampling interval."""
    p, b, cfg = state.problem, state.bounds, state.cfg
    model, clf, reg, wset = p.model, p.clf, p.reg, p.wset
    delta = cfg.delta
    x, th = state.x, state.theta_hat
    w_prev = state.w
    err = p.err_norm(x)
    if cfg.check_containment and err > b.R_star:
        raise ContainmentError(f"{p.name}: state left the overshoot ball at k={state.k}", state.k, x)

    mu_k = np.atleast_1d(clf.mu(x, th))
    in_core = err <= b.r_star
    policy = state.policy
    state.buffer.append(x)

    if cfg.backup_only:
        w_c, u_c = wset.w_sharp, mu_k
        decay = wstep = wprime = True
    else:
        u_pol = mu_k if state.u_prev is None else state.u_prev
        if cfg.update_mode == "lsq":
            res = lsq_update(
                reg, model, p.stage_cost, list(state.buffer), lambda _x: u_pol, w_prev, th, delta, wset
            )
            w_c = res.w
        else:
            w_c = gd_update(reg, model, p.stage_cost, x, u_pol, CriticState(w_prev, w_prev, cfg.l_w), th, delta, wset)

        if cfg.actor_mode == "optimize":
            u_c = solve_actor(reg, model, p.stage_cost, x, w_c, th, delta, p.box, cfg.actor, backup=mu_k).u
        else:
            J = bellman_objective(reg, model, p.stage_cost, x, w_c, th, delta)
            grad = sigma_gradient(J, policy, mu_k, p.box)
            policy = policy_gradient_step(policy, grad)
            u_c = policy_action(policy, mu_k, p.box)
        decay, wstep, wprime = check_conditions(reg, clf, model, b, x, u_c, w_c, w_prev, th, delta, wset)

    accepted = decay and wstep and wprime and not in_core and not cfg.backup_only
    if accepted:
        u_k, w_k = np.atleast_1d(u_c), np.asarray(w_c, dtype=float)
    else:
        u_k, w_k = mu_k, wset.w_sharp.copy()
    fallback = not cfg.backup_only and not in_core and not accepted

    tilde = model.theta_true - th
    T = 0.5 * float(tilde @ clf.Gamma_inv @ tilde)
    rec = StepRecord(
        k=state.k, x=x.copy(), u=u_k.copy(), w=w_k.copy(), theta_hat=th.copy(),
        cond_decay=decay, cond_wstep=wstep, cond_wprime=wprime, fallback=fallback,
        in_core=bool(in_core), stage_cost_value=float(p.stage_cost(x, u_k)),
        V_c_value=float(clf.V(x)) + T, calV_c_value=critic_eval(reg, w_k, x) + T,
    )

    tau = model.F(x).T @ critic_grad_x(reg, w_k, x)
    th_next = th + delta * clf.Gamma @ tau
    x_next, intra = integrate_sh(model, x, u_k, model.theta_true, ShConfig(delta, cfg.substeps))
    intra_err = max(p.err_norm(z) for z in intra)
    if cfg.check_containment and intra_err > b.R_star:
        raise ContainmentError(f"{p.name}: intra-sample state left the overshoot ball at k={state.k}", state.k, x_next)

    new_state = replace(state, k=state.k + 1, x=x_next, theta_hat=th_next, w=w_k, u_prev=u_k, policy=policy)
    return new_state, rec, intra_err


def run(problem, cfg, x0=None, bounds=None, theta_hat0=None, w0=None, stop_radius=None):
    """Run the closed loop for ``cfg.horizon`` steps and return the log.

    With ``stop_radius`` the run ends after the first recorded sample whose
    error norm is within that radius.
    """
    if bounds is None:
        bounds = compute_bounds(problem, cfg.delta)
    x0 = problem.defaults["x0"] if x0 is None else x0
    if problem.err_norm(x0) > problem.R:
        raise ConfigurationError(f"x0 lies outside the ball of radius R={problem.R}")
    state = init_loop(problem, bounds, cfg, x0, theta_hat0=theta_hat0, w0=w0)
    out = TrajectoryLog(problem=problem.name, delta=cfg.delta)
    out.meta = {"bounds": bounds, "config": cfg, "x0": np.asarray(x0, dtype=float)}
    for _ in range(cfg.horizon):
        state, rec, intra_err = step(state)
        out.records.append(rec)
        out.intra_err_max.append(intra_err)
        if stop_radius is not None and problem.err_norm(rec.x) <= stop_radius:
            break
    out.final_x = state.x
    out.final_theta_hat = state.theta_hat
    out.meta["final_w"] = state.w
    return out


def calvc_increments(problem, log_):
    """Per-step change of the composite Lyapunov function along a log.

    The estimator part is expanded algebraically (see
    :func:`estimator_energy_change`) to avoid cancellation.
    """
    reg, clf, theta = problem.reg, problem.clf, problem.model.theta_true
    recs = log_.records
    out = []
    for a, b in zip(recs[:-1], recs[1:]):
        dJ = critic_eval(reg, b.w, b.x) - critic_eval(reg, a.w, a.x)
        dT = estimator_energy_change(clf.Gamma_inv, theta - a.theta_hat, b.theta_hat - a.theta_hat)
        out.append(dJ + dT)
    return np.array(out)
