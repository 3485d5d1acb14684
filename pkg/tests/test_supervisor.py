import warnings
from dataclasses import replace

import numpy as np
import pytest

from stabilrl.aclf import verify_decay_backup
from stabilrl.errors import ConfigurationError, ContainmentError, InfeasibleBoundsError
from stabilrl.problems import get_problem
from stabilrl.supervisor import LoopConfig, TrajectoryLog, calvc_increments, check_conditions, compute_bounds, init_loop, run, step

from conftest import bounds_for


def quiet_bounds(problem, delta=0.01, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return compute_bounds(problem, delta, **kw)


@pytest.fixture(scope="module")
def traction_log(traction):
    return run(traction, LoopConfig(delta=0.01, horizon=400, l_w=traction.defaults["l_w"]), bounds=bounds_for(traction))


@pytest.fixture(scope="module")
def cruise_log(cruise):
    return run(cruise, LoopConfig(delta=0.01, horizon=400, l_w=cruise.defaults["l_w"]), bounds=bounds_for(cruise))


def test_bounds_invariants(problem):
    b = bounds_for(problem)
    assert b.r_star < b.r < b.R < b.R_star
    for name in ("F_bar", "tau_bar", "phi_bar", "phi_bar_1", "phi_bar_2", "L_F", "L_phi", "nu_bar", "Delta_bar", "delta_a", "delta_bar", "eps1_bar", "epsw_bar", "J_bar", "v_star"):
        val = getattr(b, name)
        assert np.isfinite(val) and val > 0, name
    assert b.delta_bar == min(b.delta_constraints.values())


def test_nu_bar_traction_closed_form(traction):
    b = bounds_for(traction)
    assert b.nu_bar == pytest.approx(0.5 * traction.params["k"] * b.r_star**2, rel=1e-12)


def test_core_and_overshoot_radii(traction):
    b = bounds_for(traction)
    # v* = q1(r) = r^2 / 2 and q2_J(rho) = w_upper rho^2.
    assert b.v_star == pytest.approx(0.5 * 0.03**2)
    assert b.r_star == pytest.approx(np.sqrt(b.v_star / 2 / traction.wset.w_upper), rel=1e-8)
    assert b.J_bar == pytest.approx(traction.wset.w_upper * traction.R**2)


def test_Delta_bar_additive(problem):
    b = bounds_for(problem)
    G = np.linalg.norm(problem.clf.Gamma, 2)
    terms = (b.phi_bar_1 * b.L_F * b.F_bar, 0.5 * b.tau_bar**2 * G, 0.5 * b.F_bar**2 * b.phi_bar_2)
    assert b.Delta_bar == pytest.approx(sum(terms), rel=1e-14)


def test_delta_bar_shrinks_with_weight_bound():
    prev = np.inf
    for w_up in (1.0, 1.5, 2.0, 4.0):
        b = quiet_bounds(get_problem("cruise", {"w_upper": w_up}), delta_a=0.32)
        assert b.delta_bar <= prev
        prev = b.delta_bar


def test_infeasible_bounds_name_constraint(cruise):
    with pytest.raises(InfeasibleBoundsError) as exc:
        quiet_bounds(cruise, delta_a=0.0)
    assert exc.value.constraint == "delta_a"


def test_warning_when_delta_exceeds_bound(cruise):
    with pytest.warns(RuntimeWarning):
        compute_bounds(cruise, 0.01, delta_a=0.32)


def test_check_conditions_examples(traction):
    b = bounds_for(traction)
    ws = traction.wset.w_sharp
    th = np.zeros(4)
    x = np.array([85.0, 0.35])
    mu = traction.clf.mu(x, th)
    rep = verify_decay_backup(traction.clf, traction.model, [x], [th], 0.01)
    decay, wstep, wprime = check_conditions(traction.reg, traction.clf, traction.model, b, x, mu, ws, ws, th, 0.01, traction.wset)
    assert rep.ok and decay and wstep and wprime
    far = ws + 2 * b.epsw_bar
    assert not check_conditions(traction.reg, traction.clf, traction.model, b, x, mu, far, ws, th, 0.01, traction.wset)[1]
    assert not check_conditions(traction.reg, traction.clf, traction.model, b, x, mu, np.array([0.49]), ws, th, 0.01, traction.wset)[2]


def test_first_estimator_step_hand_computation(traction):
    p = traction.params
    cfg = LoopConfig(delta=0.01, horizon=1, l_w=0.0)
    state = init_loop(traction, bounds_for(traction), cfg, [85.0, 0.35])
    new, rec, _ = step(state)
    v, s = 85.0, 0.35
    omega = v / (p["r_w"] * (1 - s))
    h = (1 - s) / p["m"] + p["r_w"] ** 2 / p["J"]
    mgv = p["m"] * p["g"] / v * h
    xt = s - p["s_star"]
    grad_s = 2 * rec.w[0] * xt
    tau = np.array([mgv * (1 - np.exp(-p["c2"] * s)), -mgv * s, mgv * xt, -p["a3"] * omega / v**2]) * grad_s
    expected = 0.01 * np.asarray(p["gamma"]) * tau
    np.testing.assert_allclose(new.theta_hat, expected, rtol=1e-12)


def test_fallback_records_backup_pair(traction_log, cruise_log, traction, cruise):
    for lg, prob in ((traction_log, traction), (cruise_log, cruise)):
        for rec in lg.records:
            if rec.fallback or rec.in_core:
                np.testing.assert_array_equal(rec.u, prob.clf.mu(rec.x, rec.theta_hat))
                np.testing.assert_array_equal(rec.w, prob.wset.w_sharp)
            assert prob.wset.in_prime(rec.w)


def test_cruise_needs_no_fallback(cruise_log):
    assert not any(rec.fallback for rec in cruise_log.records)


def test_forced_fallback(traction):
    b = replace(bounds_for(traction), eps1_bar=0.0, epsw_bar=0.0)
    cfg = LoopConfig(delta=0.01, horizon=3, l_w=1.0)
    lg = run(traction, cfg, bounds=b)
    for rec in lg.records:
        assert rec.fallback and not rec.cond_wstep
        np.testing.assert_array_equal(rec.u, traction.clf.mu(rec.x, rec.theta_hat))
        np.testing.assert_array_equal(rec.w, traction.wset.w_sharp)


def test_start_in_core_ball(traction):
    b = bounds_for(traction)
    x0 = np.array([90.0, 0.2 + 0.5 * b.r_star])
    lg = run(traction, LoopConfig(delta=0.01, horizon=200), x0=x0, bounds=b)
    assert lg.records[0].in_core and not lg.records[0].fallback
    errs = [traction.err_norm(r.x) for r in lg.records]
    assert max(errs) <= traction.r and max(lg.intra_err_max) <= traction.r


def test_containment_and_start_checks(traction):
    b = replace(bounds_for(traction), R_star=0.155)
    with pytest.raises(ContainmentError):
        run(traction, LoopConfig(delta=0.01, horizon=50), x0=[85.0, 0.36], bounds=b)
    with pytest.raises(ConfigurationError):
        run(traction, LoopConfig(delta=0.01, horizon=5), x0=[85.0, 0.6], bounds=bounds_for(traction))
    with pytest.raises(ConfigurationError):
        LoopConfig(delta=0.01, horizon=0)
    with pytest.raises(ConfigurationError):
        LoopConfig(delta=0.01, horizon=5, update_mode="sgd")


def test_decay_invariants_on_logs(traction_log, cruise_log, traction, cruise):
    for lg, prob in ((traction_log, traction), (cruise_log, cruise)):
        inc = calvc_increments(prob, lg)
        nu_bar = lg.meta["bounds"].nu_bar
        for rec, d in zip(lg.records[:-1], inc):
            if rec.in_core:
                continue
            if rec.fallback:
                assert d <= -lg.delta * nu_bar + 1e-9
            else:
                assert d < 0


def test_increments_match_logged_values(cruise_log, cruise):
    inc = calvc_increments(cruise, cruise_log)
    direct = np.diff(cruise_log.column("calV_c_value"))
    np.testing.assert_allclose(inc, direct, atol=1e-9 * np.abs(cruise_log.column("calV_c_value")).max())


def test_estimate_growth_bound_gamma(traction, cruise):
    for prob in (traction, cruise):
        b = bounds_for(prob)
        lg = run(prob, LoopConfig(delta=0.01, horizon=200, l_w=prob.defaults["l_w"]), bounds=b)
        G = np.linalg.norm(prob.clf.Gamma, 2)
        th0 = np.linalg.norm(lg.records[0].theta_hat)
        for rec in lg.records:
            assert np.linalg.norm(rec.theta_hat) <= th0 + 0.01 * rec.k * G * b.tau_bar


def test_practical_stability_default_traction(traction_log, traction):
    errs = [traction.err_norm(r.x) for r in traction_log.records]
    K = traction_log.hold_time(errs, traction.r)
    assert K is not None and K * 0.01 <= 10.0


def test_hold_property(cruise_log, cruise):
    b = cruise_log.meta["bounds"]
    vc = cruise_log.column("V_c_value")
    hits = np.flatnonzero(vc <= 0.75 * b.v_star)
    if hits.size:
        k = hits[0]
        errs = np.array([cruise.err_norm(r.x) for r in cruise_log.records])
        assert errs[k:].max() <= cruise.r and max(cruise_log.intra_err_max[k:]) <= cruise.r


def test_reach_and_hold_helpers():
    lg = TrajectoryLog("t", 0.1, intra_err_max=[0.5, 0.5, 0.05, 0.05, 0.05])
    e = [1.0, 0.05, 0.5, 0.05, 0.05]
    assert lg.reach_time(e, 0.1) == 1
    assert lg.hold_time(e, 0.1) == 3
    assert lg.hold_time(e, 0.1, intra=False) == 3
    assert lg.hold_time([1.0, 1.0], 0.1, intra=False) is None
    assert lg.reach_time([1.0], 0.1) is None


def test_run_is_deterministic(cruise):
    cfg = LoopConfig(delta=0.01, horizon=50, l_w=cruise.defaults["l_w"])
    a = run(cruise, cfg, bounds=bounds_for(cruise))
    b = run(cruise, cfg, bounds=bounds_for(cruise))
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.x, rb.x) and np.array_equal(ra.u, rb.u) and np.array_equal(ra.theta_hat, rb.theta_hat)


@pytest.mark.parametrize("update_mode, actor_mode, M", [("lsq", "optimize", 3), ("gd", "policy_gradient", 1), ("lsq", "policy_gradient", 2)])
def test_alternative_modes_keep_invariants(cruise, update_mode, actor_mode, M):
    cfg = LoopConfig(delta=0.01, horizon=150, update_mode=update_mode, actor_mode=actor_mode, M=M, l_w=cruise.defaults["l_w"])
    lg = run(cruise, cfg, bounds=bounds_for(cruise))
    inc = calvc_increments(cruise, lg)
    nu_bar = lg.meta["bounds"].nu_bar
    for rec, d in zip(lg.records[:-1], inc):
        if not rec.in_core:
            assert d < 0 if not rec.fallback else d <= -0.01 * nu_bar + 1e-9
        assert cruise.wset.in_prime(rec.w)
