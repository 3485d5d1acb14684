"""Experiment runner: single runs, learned-versus-backup comparisons, grid
sweeps, CSV output and the ``stabilrl`` command line."""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, ContainmentError, InfeasibleBoundsError, StabilRLError
from .problems import get_problem, load_params, parse_value
from .supervisor import (
    LoopConfig,
    StepRecord,
    TrajectoryLog,
    calvc_increments,
    certification_grid,
    compute_bounds,
    run,
)
from .aclf import verify_decay_backup

log = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "SweepSpec",
    "CostRatio",
    "SweepRow",
    "UNREACHED",
    "cost_ratio",
    "compare",
    "sweep",
    "decay_violations",
    "emit_csv",
    "emit_sweep_csv",
    "read_csv",
    "main",
]

UNREACHED = "unreached"
EXIT_OK, EXIT_INVARIANT, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3
RUN_KEYS = ("problem", "update_mode", "actor_mode", "M", "substeps", "seed", "output", "workers")
ENV_CONFIG = "STABILRL_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    problem: str = "traction"
    x0: Optional[tuple] = None
    horizon: Optional[int] = None
    delta: Optional[float] = None
    update_mode: str = "gd"
    actor_mode: str = "optimize"
    M: int = 1
    seed: int = 0
    substeps: int = 10
    l_w: Optional[float] = None
    output: Optional[str] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon is not None and self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.update_mode not in ("lsq", "gd"):
            raise ConfigurationError(f"update_mode must be 'lsq' or 'gd', got {self.update_mode!r}")
        if self.actor_mode not in ("optimize", "policy_gradient"):
            raise ConfigurationError(f"actor_mode must be 'optimize' or 'policy_gradient', got {self.actor_mode!r}")

    def build_problem(self):
        return get_problem(self.problem, self.params)

    def loop_config(self, problem, backup_only=False):
        d = problem.defaults
        return LoopConfig(
            delta=d["delta"] if self.delta is None else float(self.delta),
            horizon=d["horizon"] if self.horizon is None else int(self.horizon),
            update_mode=self.update_mode,
            actor_mode=self.actor_mode,
            M=self.M,
            l_w=d["l_w"] if self.l_w is None else float(self.l_w),
            substeps=self.substeps,
            backup_only=backup_only,
        )

    def initial_state(self, problem):
        return problem.defaults["x0"] if self.x0 is None else np.atleast_1d(np.asarray(self.x0, dtype=float))


@dataclass(frozen=True)
class SweepSpec:
    """Grid of initial states: ``axes`` maps a state index to ``(lo, hi, points)``.

    Unswept coordinates take the value from ``base``.
    """

    axes: dict
    base: Optional[tuple] = None

    def __post_init__(self):
        for i, (lo, hi, num) in self.axes.items():
            if int(num) < 2:
                raise ConfigurationError(f"sweep axis {i} needs at least 2 points")
            if not lo <= hi:
                raise ConfigurationError(f"sweep axis {i} has lo > hi")

    def points(self, n):
        base = np.zeros(n) if self.base is None else np.asarray(self.base, dtype=float)
        idx = sorted(self.axes)
        grids = [np.linspace(lo, hi, int(num)) for lo, hi, num in (self.axes[i] for i in idx)]
        out = []
        for combo in itertools.product(*grids):
            x = base.copy()
            x[idx] = combo
            out.append(x)
        return out


class CostRatio(NamedTuple):
    value: object  # float, or UNREACHED
    K_u: Optional[int]
    K_mu: Optional[int]

    @property
    def reached(self):
        return self.value != UNREACHED


class SweepRow(NamedTuple):
    x0: np.ndarray
    C: object
    K_u: Optional[int]
    K_mu: Optional[int]
    fallback_count: int
    error: str = ""


def _err_norms(problem, lg):
    return np.array([problem.err_norm(rec.x) for rec in lg.records])


def cost_ratio(log_learned, log_backup, problem):
    """Transient cost of the learned run over that of the backup run.

    Each sum runs up to and including its own first sample inside the
    target ball. Returns :data:`UNREACHED` as value when either run never
    gets there or the backup sum is zero.
    """
    K_u = log_learned.reach_time(_err_norms(problem, log_learned), problem.r)
    K_mu = log_backup.reach_time(_err_norms(problem, log_backup), problem.r)
    if K_u is None or K_mu is None:
        return CostRatio(UNREACHED, K_u, K_mu)
    num = sum(rec.stage_cost_value for rec in log_learned.records[: K_u + 1])
    den = sum(rec.stage_cost_value for rec in log_backup.records[: K_mu + 1])
    if den <= 0:
        return CostRatio(UNREACHED, K_u, K_mu)
    return CostRatio(num / den, K_u, K_mu)


def compare(problem, cfg, x0=None, bounds=None, stop_on_reach=False):
    """Run the learned loop and the backup-only loop from the same start.

    Returns ``(CostRatio, learned_log, backup_log)``.
    """
    x0 = cfg.initial_state(problem) if x0 is None else x0
    if bounds is None:
        bounds = compute_bounds(problem, cfg.loop_config(problem).delta)
    stop = problem.r if stop_on_reach else None
    learned = run(problem, cfg.loop_config(problem), x0=x0, bounds=bounds, stop_radius=stop)
    backup = run(problem, cfg.loop_config(problem, backup_only=True), x0=x0, bounds=bounds, stop_radius=stop)
    return cost_ratio(learned, backup, problem), learned, backup


def _sweep_cell(args):
    cfg, x0, bounds = args
    problem = cfg.build_problem()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ratio, learned, _ = compare(problem, cfg, x0=x0, bounds=bounds, stop_on_reach=True)
    except StabilRLError as exc:
        return SweepRow(x0, UNREACHED, None, None, 0, f"{type(exc).__name__}: {exc}")
    fb = int(sum(rec.fallback for rec in learned.records))
    return SweepRow(x0, ratio.value, ratio.K_u, ratio.K_mu, fb)


def sweep(cfg, spec, bounds=None, workers=1):
    """C_% over a grid of initial states, one row per cell in grid order.

    Runs stop at the first sample inside the target ball, so
    ``fallback_count`` counts fallbacks before reaching it. Cell errors are
    recorded in the row and the sweep continues.
    """
    problem = cfg.build_problem()
    if bounds is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            bounds = compute_bounds(problem, cfg.loop_config(problem).delta)
    pts = spec.points(problem.model.n)
    for x in pts:
        if problem.err_norm(x) > problem.R:
            raise ConfigurationError(f"sweep point {x} lies outside the ball of radius R={problem.R}")
    jobs = [(cfg, x, bounds) for x in pts]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, jobs))
    return [_sweep_cell(j) for j in jobs]


def decay_violations(problem, lg, tol=1e-9):
    """Indices of steps outside the core ball breaking the composite decay.

    Learned steps need a strict decrease; fallback steps need a decrease of
    at least ``delta * nu_bar`` (up to ``tol``).
    """
    inc = calvc_increments(problem, lg)
    nu_bar = lg.meta["bounds"].nu_bar
    bad = []
    for rec, d in zip(lg.records[:-1], inc):
        if rec.in_core:
            continue
        if rec.fallback and d > -lg.delta * nu_bar + tol:
            bad.append(rec.k)
        elif not rec.fallback and not d < 0:
            bad.append(rec.k)
    return bad


# -- CSV ------------------------------------------------------------------

FLAG_COLS = ("cond_decay", "cond_wstep", "cond_wprime", "fallback", "in_core")


def _fmt(v):
    return format(float(v), ".17g")


def trajectory_header(n, m, l, p):
    cols = ["k", "t"]
    cols += [f"x{i}" for i in range(n)]
    cols += [f"u{i}" for i in range(m)]
    cols += [f"w{i}" for i in range(l)]
    cols += [f"theta_hat{i}" for i in range(p)]
    cols += list(FLAG_COLS) + ["stage_cost", "V_c", "calV_c"]
    return cols


def emit_csv(lg, path, dims=None):
    """Write a trajectory log; ``dims = (n, m, l, p)`` is needed only for an empty log."""
    if lg.records:
        r0 = lg.records[0]
        dims = (r0.x.size, r0.u.size, r0.w.size, r0.theta_hat.size)
    elif dims is None:
        raise ConfigurationError("emit_csv: empty log needs explicit dims")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(trajectory_header(*dims))
        for rec in lg.records:
            row = [str(rec.k), _fmt(rec.k * lg.delta)]
            row += [_fmt(v) for v in (*rec.x, *rec.u, *rec.w, *rec.theta_hat)]
            row += ["1" if getattr(rec, c) else "0" for c in FLAG_COLS]
            row += [_fmt(rec.stage_cost_value), _fmt(rec.V_c_value), _fmt(rec.calV_c_value)]
            wr.writerow(row)


def read_csv(path, problem_name="", delta=None):
    """Parse a file written by :func:`emit_csv` back into a :class:`TrajectoryLog`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]

    def block(prefix):
        return [i for i, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]

    ix, iu, iw, ith = block("x"), block("u"), block("w"), block("theta_hat")
    col = {h: i for i, h in enumerate(header)}
    recs = []
    for row in body:
        vec = lambda ids: np.array([float(row[i]) for i in ids])
        recs.append(
            StepRecord(
                k=int(row[col["k"]]), x=vec(ix), u=vec(iu), w=vec(iw), theta_hat=vec(ith),
                cond_decay=row[col["cond_decay"]] == "1", cond_wstep=row[col["cond_wstep"]] == "1",
                cond_wprime=row[col["cond_wprime"]] == "1", fallback=row[col["fallback"]] == "1",
                in_core=row[col["in_core"]] == "1", stage_cost_value=float(row[col["stage_cost"]]),
                V_c_value=float(row[col["V_c"]]), calV_c_value=float(row[col["calV_c"]]),
            )
        )
    if delta is None:
        delta = float(body[1][col["t"]]) if len(body) > 1 else 0.0
    return TrajectoryLog(problem=problem_name, delta=delta, records=recs)


def emit_sweep_csv(rows, path):
    n = rows[0].x0.size if rows else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"x0_{i}" for i in range(n)] + ["C_pct", "K_u", "K_mu", "fallback_count", "error"])
        for row in rows:
            C = row.C if row.C == UNREACHED else _fmt(row.C)
            ks = ["" if k is None else str(k) for k in (row.K_u, row.K_mu)]
            wr.writerow([_fmt(v) for v in row.x0] + [C, *ks, str(row.fallback_count), row.error])


# -- command line ---------------------------------------------------------


def _floats(text):
    v = parse_value(text)
    return [float(t) for t in (v if isinstance(v, list) else [v])]


def _build_parser():
    ap = argparse.ArgumentParser(prog="stabilrl", description="Stabilizing actor-critic learning with a certified backup controller.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", choices=["traction", "cruise"])
        p.add_argument("--config", help=f"flat key = value parameter file (default: ${ENV_CONFIG})")
        p.add_argument("--delta", type=float)
        p.add_argument("--horizon", type=int)
        p.add_argument("--x0", type=_floats, help="comma-separated initial state")
        p.add_argument("--update-mode", dest="update_mode", choices=["lsq", "gd"])
        p.add_argument("--actor-mode", dest="actor_mode", choices=["optimize", "policy_gradient"])
        p.add_argument("--M", type=int, help="critic sample buffer length")
        p.add_argument("--l-w", dest="l_w", type=float, help="critic learning rate")
        p.add_argument("--substeps", type=int, help="RK4 substeps per sampling period")
        p.add_argument("--seed", type=int, help="recorded with the run; bound estimation uses fixed grids")
        p.add_argument("--output", "-o", help="CSV output path")

    p_run = sub.add_parser("run", help="single closed-loop run")
    common(p_run)
    p_cmp = sub.add_parser("compare", help="learned versus backup-only run, prints C_%%")
    common(p_cmp)
    p_sw = sub.add_parser("sweep", help="C_%% over a grid of initial states")
    common(p_sw)
    p_sw.add_argument("--axis", action="append", default=[], metavar="I:LO:HI:N", help="swept state coordinate (repeatable)")
    p_sw.add_argument("--workers", type=int)
    p_cert = sub.add_parser("certify", help="bounds report and backup decay certificate")
    common(p_cert)
    return ap


def _resolve_config(args):
    """Merge defaults, the parameter file and explicit flags (flags win)."""
    path = args.config or os.environ.get(ENV_CONFIG)
    file_vals = load_params(path) if path else {}
    run_vals = {k: file_vals.pop(k) for k in list(file_vals) if k in RUN_KEYS}
    flags = {k: v for k, v in vars(args).items() if v is not None}
    problem = flags.get("problem", run_vals.get("problem", "traction"))
    params = dict(file_vals)
    # Run-level flags that double as problem defaults.
    for key in ("delta", "horizon", "l_w"):
        if key in flags:
            params[key] = flags[key]
    if "x0" in flags:
        params["x0"] = list(flags["x0"])
    merged = {**run_vals, **{k: v for k, v in flags.items() if k in RUN_KEYS}}
    cfg = RunConfig(
        problem=problem,
        update_mode=merged.get("update_mode", "gd"),
        actor_mode=merged.get("actor_mode", "optimize"),
        M=int(merged.get("M", 1)),
        seed=int(merged.get("seed", 0)),
        substeps=int(merged.get("substeps", 10)),
        output=merged.get("output"),
        params=params,
    )
    return cfg, int(merged.get("workers", 1))


def _summary(problem, lg):
    e = _err_norms(problem, lg)
    K = lg.reach_time(e, problem.r)
    hold = lg.hold_time(e, problem.r)
    fb = int(sum(r.fallback for r in lg.records))
    return (
        f"steps={len(lg)} reach_k={K} hold_k={hold} fallbacks={fb} "
        f"final_x={np.array2string(lg.final_x, precision=6)}"
    )


def _parse_axes(items, n):
    axes = {}
    for item in items:
        try:
            i, lo, hi, num = item.split(":")
            axes[int(i)] = (float(lo), float(hi), int(num))
        except ValueError:
            raise ConfigurationError(f"bad --axis '{item}', expected I:LO:HI:N") from None
        if not 0 <= int(i) < n:
            raise ConfigurationError(f"--axis index {i} out of range")
    return axes


def _cmd_run(cfg, problem):
    lg = run(problem, cfg.loop_config(problem), x0=cfg.initial_state(problem))
    print(f"{problem.name}: {_summary(problem, lg)}")
    if cfg.output:
        emit_csv(lg, cfg.output)
    bad = decay_violations(problem, lg)
    if bad:
        print(f"composite decay violated at steps {bad[:10]}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _cmd_compare(cfg, problem):
    ratio, learned, backup = compare(problem, cfg)
    print(f"learned: {_summary(problem, learned)}")
    print(f"backup:  {_summary(problem, backup)}")
    C = ratio.value if ratio.value == UNREACHED else f"{ratio.value:.6g}"
    print(f"C_pct = {C} (K_u={ratio.K_u}, K_mu={ratio.K_mu})")
    if cfg.output:
        emit_csv(learned, cfg.output)
    return EXIT_INVARIANT if decay_violations(problem, learned) or decay_violations(problem, backup) else EXIT_OK


def _cmd_sweep(cfg, problem, axes_args, workers):
    if axes_args:
        axes = _parse_axes(axes_args, problem.model.n)
    elif problem.name == "traction":
        axes = {0: (70.0, 110.0, 9), 1: (0.05, 0.5, 10)}
    else:
        lo, hi = problem.target[0] - problem.R, problem.target[0] + problem.R
        axes = {0: (lo, hi, 11)}
    spec = SweepSpec(axes, base=tuple(cfg.initial_state(problem)))
    rows = sweep(cfg, spec, workers=workers)
    vals = [r.C for r in rows if r.C != UNREACHED]
    print(f"cells={len(rows)} reached={len(vals)} unreached={len(rows) - len(vals)}")
    if vals:
        print(f"C_pct min={min(vals):.6g} max={max(vals):.6g} mean={np.mean(vals):.6g}")
    if cfg.output:
        emit_sweep_csv(rows, cfg.output)
    return EXIT_OK


def _cmd_certify(cfg, problem):
    delta = cfg.loop_config(problem).delta
    try:
        bounds = compute_bounds(problem, delta)
    except InfeasibleBoundsError as exc:
        print(f"infeasible bounds ({exc.constraint}): {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(bounds.report())
    rep = verify_decay_backup(
        problem.clf, problem.model, certification_grid(problem), problem.theta_grid(), delta, core_radius=bounds.r_star
    )
    print(f"certificate: {rep.summary()}")
    for x, th, dvc, bound in rep.violations[:10]:
        print(f"  violation x={x} theta_hat={th} dVc={dvc:.6g} bound={bound:.6g}")
    for x, th, msg in rep.blowups[:10]:
        print(f"  blowup x={x} theta_hat={th}: {msg}")
    return EXIT_OK if rep.ok else EXIT_INVARIANT


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        cfg, workers = _resolve_config(args)
        if args.command == "sweep" and args.workers is not None:
            workers = args.workers
        problem = cfg.build_problem()
        t0 = time.perf_counter()
        if args.command == "run":
            code = _cmd_run(cfg, problem)
        elif args.command == "compare":
            code = _cmd_compare(cfg, problem)
        elif args.command == "sweep":
            code = _cmd_sweep(cfg, problem, args.axis, workers)
        else:
            code = _cmd_certify(cfg, problem)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
        return code
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ContainmentError, InfeasibleBoundsError) as exc:
        print(f"stability invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except StabilRLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
