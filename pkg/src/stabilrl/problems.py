"""Benchmark problems: wheel-slip traction control and adaptive cruise control.

Physical constants not fixed by the control design (masses, inertias, model
coefficients, gains) are configuration defaults chosen for a normalised
model. They are not measured vehicle data. Every key in the defaults tables
can be overridden from a parameter file (see :func:`load_params`).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .actor import ControlBox
from .aclf import AdaptiveClf
from .critic import Regressor, WeightSet
from .dynamics import SystemModel
from .errors import ConfigurationError, ModelSingularityError

__all__ = [
    "BenchmarkProblem",
    "TRACTION_DEFAULTS",
    "CRUISE_DEFAULTS",
    "traction_problem",
    "cruise_problem",
    "get_problem",
    "load_params",
    "parse_value",
]

# Slip benchmark. State x = [v, s]; theta = [rho, c3, M, tau_f].
# c1, c2, c3, s_star, r, delta and the stage-cost weights come with the
# control design; the rest are chosen defaults for a unit-mass model.
TRACTION_DEFAULTS = {
    "m": 1.0,
    "g": 9.81,
    "J": 1.0,
    "r_w": 0.3,
    "tau_f": 11.4,
    "c1": 1.2801,
    "c2": 23.99,
    "c3": 0.52,
    "M": 0.0,
    "a1": 0.01,
    "a2": 1000.0,
    "a3": 0.01,
    "k": 1.0,
    "gamma": [200.0, 200.0, 200.0, 200.0],
    "s_star": 0.2,
    "r": 0.03,
    "R": 0.3,
    "w_lower": 0.5,
    "w_upper": 1.0,
    "u_min": -1.0,
    "u_max": 1.0,
    "v_min": 40.0,
    "v_max": 160.0,
    "theta_rel": 0.5,
    "theta_abs": 0.5,
    "q_state": 5.0,
    "q_input": 0.1,
    "delta": 0.01,
    "theta_hat0": [0.0, 0.0, 0.0, 0.0],
    "w0": [0.5],
    "l_w": 1e-6,
    "horizon": 1000,
    "x0": [85.0, 0.35],
    "cert_v": [70.0, 110.0],
    "cert_s": [0.05, 0.5],
}

# Cruise benchmark. State x = [v]; theta = [f0, f1, f2].
CRUISE_DEFAULTS = {
    "m": 165.0,
    "f0": 0.01,
    "f1": 0.5,
    "f2": 0.025,
    "eps": 0.4,
    "gamma": [1000.0, 5.0, 0.02],
    "v_star": 14.0,
    "r": 0.5,
    "R": 5.0,
    "w_lower": 1.0,
    "w_upper": 2.0,
    "u_min": -50000.0,
    "u_max": 50000.0,
    "theta_rel": 0.5,
    "theta_abs": 0.5,
    "q_state": 1.0,
    "q_input": 1e-7,
    "delta": 0.01,
    "theta_hat0": [0.0, 0.0, 0.0],
    "w0": [1.0],
    "l_w": 1e-9,
    "horizon": 2000,
    "x0": [10.0],
}


@dataclass(frozen=True)
class BenchmarkProblem:
    """Everything the learning loop needs for one benchmark.

    ``target`` is the full-state reference used to centre balls; only the
    entries in ``index_set_I`` matter. ``aux_ranges`` gives the working
    interval of every state outside the index set (used for bound
    estimation and the boundedness check).
    """

    name: str
    model: SystemModel
    clf: AdaptiveClf
    reg: Regressor
    wset: WeightSet
    box: ControlBox
    stage_cost: Callable
    index_set_I: tuple
    target: np.ndarray
    R: float
    r: float
    theta_set: tuple
    defaults: dict
    params: dict = field(default_factory=dict)
    aux_ranges: dict = field(default_factory=dict)
    cert_ranges: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index_set_I:
            raise ConfigurationError("index set must be nonempty")
        if not 0 < self.r < self.R:
            raise ConfigurationError("ball radii must satisfy 0 < r < R")

    def error(self, x):
        x = np.asarray(x, dtype=float)
        idx = list(self.index_set_I)
        return x[idx] - self.target[idx]

    def err_norm(self, x):
        return float(np.linalg.norm(self.error(x)))

    def ball_grid(self, rho, n_err=41, n_aux=9):
        """Grid of states with ``||error|| <= rho`` and aux states in their ranges."""
        n = self.model.n
        idx = list(self.index_set_I)
        axes = []
        for i in range(n):
            if i in idx:
                axes.append(np.linspace(self.target[i] - rho, self.target[i] + rho, n_err))
            else:
                lo, hi = self.aux_ranges[i]
                axes.append(np.linspace(lo, hi, n_aux))
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        keep = np.linalg.norm(mesh[:, idx] - self.target[idx], axis=1) <= rho + 1e-12
        return mesh[keep]

    def sample_ball(self, rng, k, rho):
        """Uniform samples with ``||error|| <= rho`` (rejection in the error box)."""
        n = self.model.n
        idx = list(self.index_set_I)
        out = np.empty((0, n))
        while len(out) < k:
            x = np.empty((2 * k, n))
            for i in range(n):
                if i in idx:
                    x[:, i] = self.target[i] + rng.uniform(-rho, rho, 2 * k)
                else:
                    lo, hi = self.aux_ranges[i]
                    x[:, i] = rng.uniform(lo, hi, 2 * k)
            ok = np.linalg.norm(x[:, idx] - self.target[idx], axis=1) <= rho
            out = np.vstack([out, x[ok]])
        return out[:k]

    def theta_grid(self, points_per_axis=2):
        """Grid of estimates: the parameter box widened to contain the initial guess.

        Corners plus the true value by default.
        """
        lo, hi = self.theta_set
        th0 = self.defaults["theta_hat0"]
        lo, hi = np.minimum(lo, th0), np.maximum(hi, th0)
        axes = [np.linspace(a, b, points_per_axis) for a, b in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        return np.vstack([mesh, self.model.theta_true[None, :]])


def _merge(defaults, params):
    out = dict(defaults)
    for key, val in (params or {}).items():
        if key not in defaults:
            raise ConfigurationError(f"unknown parameter '{key}'")
        out[key] = val
    return out


def _theta_box(theta, rel, floor):
    half = np.where(theta != 0.0, rel * np.abs(theta), floor)
    return theta - half, theta + half


def traction_problem(params=None):
    """Wheel-slip regulation to ``s_star`` with speed as an unregulated, bounded state."""
    p = _merge(TRACTION_DEFAULTS, params)
    m, g, J, r_w = p["m"], p["g"], p["J"], p["r_w"]
    a1, a2, a3, k = p["a1"], p["a2"], p["a3"], p["k"]
    c2, s_star = p["c2"], p["s_star"]
    if min(m, J, r_w, a2, k) <= 0:
        raise ConfigurationError("traction: m, J, r_w, a2 and k must be positive")

    def check(x):
        v, s = x[0], x[1]
        if v <= 0:
            raise ModelSingularityError(f"traction model undefined at v={v}")
        if s >= 1:
            raise ModelSingularityError(f"traction model undefined at s={s}")
        return v, s

    def omega(v, s):
        # Wheel speed from the slip definition s = 1 - v / (omega r_w).
        return v / (r_w * (1.0 - s))

    def h(s):
        return (1.0 - s) / m + r_w**2 / J

    def f(x):
        v, s = check(x)
        return np.array([0.0, a1 * omega(v, s) / v])

    def F(x):
        v, s = check(x)
        e = 1.0 - np.exp(-c2 * s)
        z = s - s_star
        mgh = m * g * h(s) / v
        return np.array(
            [
                [g * e, -g * s, g * z, -1.0 / m],
                [mgh * e, -mgh * s, mgh * z, -a3 * omega(v, s) / v**2],
            ]
        )

    def gmat(x):
        v, _ = check(x)
        return np.array([[0.0], [-a2 / v]])

    theta_true = np.array([p["c1"], p["c3"], p["M"], p["tau_f"]], dtype=float)
    model = SystemModel(2, 1, 4, f, F, gmat, theta_true, name="traction")

    def mu(x, th):
        v, s = check(x)
        rho_h, c3_h, M_h, tau_h = th
        z = s - s_star
        w_ = omega(v, s)
        mg_a2_h = m * g * h(s) / a2
        u = (
            a1 / a2 * w_
            + (v * k / a2 + mg_a2_h * M_h) * z
            - a3 * w_ / (a2 * v) * tau_h
            + mg_a2_h * (rho_h * (1.0 - np.exp(-c2 * s)) - c3_h * s)
        )
        return np.array([u])

    clf = AdaptiveClf(
        V=lambda x: 0.5 * (x[1] - s_star) ** 2,
        grad_V=lambda x: np.array([0.0, x[1] - s_star]),
        nu=lambda x, th: k * (x[1] - s_star) ** 2,
        mu=mu,
        Gamma=np.diag(np.asarray(p["gamma"], dtype=float)),
        q1=lambda rho: 0.5 * rho**2,
        q2=lambda rho: 0.5 * rho**2,
        alpha_nu=lambda rho: k * rho**2,
        q1_inv=lambda v: np.sqrt(2.0 * v),
        q2_inv=lambda v: np.sqrt(2.0 * v),
        state_error=lambda x: np.array([x[1] - s_star]),
    )
    reg = Regressor(
        l=1,
        phi=lambda x: np.array([(x[1] - s_star) ** 2]),
        grad_phi=lambda x: np.array([[0.0, 2.0 * (x[1] - s_star)]]),
        hess_phi=lambda x: np.array([[[0.0, 0.0], [0.0, 2.0]]]),
        phi_sup=lambda rho: rho**2,
        lipschitz_phi=lambda rho: 2.0 * rho,
    )
    w_sharp = np.array([0.5])
    wset = WeightSet(p["w_lower"], p["w_upper"], lambda w: bool(w[0] >= 0.5), w_sharp)
    qs, qu = p["q_state"], p["q_input"]

    def stage_cost(x, u):
        return qs * (x[1] - s_star) ** 2 + qu * float(np.dot(u, u))

    defaults = _run_defaults(p)
    return BenchmarkProblem(
        name="traction",
        model=model,
        clf=clf,
        reg=reg,
        wset=wset,
        box=ControlBox([p["u_min"]], [p["u_max"]]),
        stage_cost=stage_cost,
        index_set_I=(1,),
        target=np.array([0.0, s_star]),
        R=p["R"],
        r=p["r"],
        theta_set=_theta_box(theta_true, p["theta_rel"], p["theta_abs"]),
        defaults=defaults,
        params=p,
        aux_ranges={0: (p["v_min"], p["v_max"])},
        cert_ranges={0: tuple(p["cert_v"]), 1: tuple(p["cert_s"])},
    )


def cruise_problem(params=None):
    """Velocity regulation to ``v_star`` with unknown friction coefficients."""
    p = _merge(CRUISE_DEFAULTS, params)
    m, eps, v_star = p["m"], p["eps"], p["v_star"]
    if m <= 0 or eps <= 0:
        raise ConfigurationError("cruise: m and eps must be positive")

    def F(x):
        v = x[0]
        return -np.array([[1.0, v, v * v]]) / m

    model = SystemModel(
        1,
        1,
        3,
        f=lambda x: np.zeros(1),
        F=F,
        g=lambda x: np.array([[1.0 / m]]),
        theta_true=np.array([p["f0"], p["f1"], p["f2"]], dtype=float),
        name="cruise",
    )

    def mu(x, th):
        v = x[0]
        return np.array([-eps * m / 2.0 * (v - v_star) + th[0] + th[1] * v + th[2] * v * v])

    clf = AdaptiveClf(
        V=lambda x: (x[0] - v_star) ** 2,
        grad_V=lambda x: np.array([2.0 * (x[0] - v_star)]),
        nu=lambda x, th: eps * (x[0] - v_star) ** 2,
        mu=mu,
        Gamma=np.diag(np.asarray(p["gamma"], dtype=float)),
        q1=lambda rho: rho**2,
        q2=lambda rho: rho**2,
        alpha_nu=lambda rho: eps * rho**2,
        q1_inv=np.sqrt,
        q2_inv=np.sqrt,
        state_error=lambda x: np.array([x[0] - v_star]),
    )
    reg = Regressor(
        l=1,
        phi=lambda x: np.array([(x[0] - v_star) ** 2]),
        grad_phi=lambda x: np.array([[2.0 * (x[0] - v_star)]]),
        hess_phi=lambda x: np.array([[[2.0]]]),
        phi_sup=lambda rho: rho**2,
        lipschitz_phi=lambda rho: 2.0 * rho,
    )
    wset = WeightSet(p["w_lower"], p["w_upper"], lambda w: bool(w[0] >= 1.0), np.array([1.0]))
    qs, qu = p["q_state"], p["q_input"]

    def stage_cost(x, u):
        return qs * (x[0] - v_star) ** 2 + qu * float(np.dot(u, u))

    return BenchmarkProblem(
        name="cruise",
        model=model,
        clf=clf,
        reg=reg,
        wset=wset,
        box=ControlBox([p["u_min"]], [p["u_max"]]),
        stage_cost=stage_cost,
        index_set_I=(0,),
        target=np.array([v_star]),
        R=p["R"],
        r=p["r"],
        theta_set=_theta_box(model.theta_true, p["theta_rel"], p["theta_abs"]),
        defaults=_run_defaults(p),
        params=p,
    )


def _run_defaults(p):
    return {
        "delta": float(p["delta"]),
        "theta_hat0": np.asarray(p["theta_hat0"], dtype=float),
        "w0": np.asarray(p["w0"], dtype=float),
        "l_w": float(p["l_w"]),
        "horizon": int(p["horizon"]),
        "x0": np.atleast_1d(np.asarray(p["x0"], dtype=float)),
    }


PROBLEMS = {"traction": traction_problem, "cruise": cruise_problem}


def get_problem(name, params=None):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigurationError(f"unknown problem '{name}' (choose from {sorted(PROBLEMS)})") from None
    return factory(params)


def parse_value(text):
    """Parse a scalar, a comma-separated list of numbers, or a bare string."""
    text = text.strip()
    if "," in text:
        return [float(t) for t in text.split(",") if t.strip()]
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def load_params(path):
    """Read a flat ``key = value`` parameter file.

    Blank lines and ``#`` comments are ignored; list values are
    comma-separated numbers.
    """
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[params]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return {key: parse_value(val) for key, val in cp["params"].items()}
