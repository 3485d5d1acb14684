import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stabilrl.actor import (
    ActorConfig,
    ControlBox,
    PolicyParams,
    bellman_objective,
    golden_section,
    policy_action,
    policy_gradient_step,
    sigma_gradient,
    solve_actor,
)
from stabilrl.critic import Regressor
from stabilrl.dynamics import SystemModel
from stabilrl.errors import ConfigurationError

ZERO_REG = Regressor(1, lambda x: np.array([x[0] ** 2]), lambda x: np.array([[2 * x[0]]]), lambda x: np.array([[[2.0]]]))
TRIVIAL = SystemModel(1, 1, 1, f=lambda x: np.zeros(1), F=lambda x: np.zeros((1, 1)), g=lambda x: np.array([[1.0]]), theta_true=[0.0])


def act(cost, box, w=0.0, x=np.array([1.0]), backup=None):
    return solve_actor(ZERO_REG, TRIVIAL, cost, x, np.array([w]), np.zeros(1), 0.1, box, backup=backup)


def test_interior_minimum():
    res = act(lambda x, u: float(u[0] ** 2), ControlBox([-3.0], [5.0]))
    assert abs(res.u[0]) < 1e-7


def test_bound_clipped_minimum():
    res = act(lambda x, u: float((u[0] - 5) ** 2), ControlBox([-1.0], [1.0]))
    assert res.u[0] == 1.0


def test_backup_seed_kept_when_optimal():
    res = act(lambda x, u: float((u[0] - 0.25) ** 2), ControlBox([-1.0], [1.0]), backup=np.array([0.25]))
    assert res.u[0] == 0.25 and not res.improved


def test_box_validation():
    with pytest.raises(ConfigurationError):
        ControlBox([1.0], [0.0])
    box = ControlBox([-1.0, 0.0], [1.0, 2.0])
    np.testing.assert_array_equal(box.midpoint, [0.0, 1.0])
    np.testing.assert_array_equal(box.clip([5.0, -5.0]), [1.0, 0.0])
    assert box.contains([0.5, 1.5]) and not box.contains([1.5, 1.0])


@given(st.floats(-10, 10), st.floats(0.1, 5.0))
def test_golden_section_quadratic(c, half):
    lo, hi = -half, half
    x, fx = golden_section(lambda t: (t - c) ** 2, lo, hi, tol=1e-10)
    expected = min(max(c, lo), hi)
    assert abs(x - expected) <= 1e-8


def test_golden_section_degenerate_interval():
    x, fx = golden_section(lambda t: t, 2.0, 2.0)
    assert x == 2.0 and fx == 2.0


def test_two_dimensional_box():
    cost = lambda x, u: float((u[0] - 0.3) ** 2 + 2 * (u[1] + 0.7) ** 2)
    model = SystemModel(1, 2, 1, f=lambda x: np.zeros(1), F=lambda x: np.zeros((1, 1)), g=lambda x: np.zeros((1, 2)), theta_true=[0.0])
    res = solve_actor(ZERO_REG, model, cost, np.array([0.0]), np.zeros(1), np.zeros(1), 0.1, ControlBox([-1, -1], [1, 1]))
    np.testing.assert_allclose(res.u, [0.3, -0.7], atol=1e-7)


def test_bellman_objective_matches_target(traction):
    from stabilrl.critic import bellman_target

    x = np.array([90.0, 0.4])
    th = np.array([1.0, 0.5, 0.1, 12.0])
    J = bellman_objective(traction.reg, traction.model, traction.stage_cost, x, [0.7], th, 0.01)
    for u in (-0.5, 0.0, 0.33):
        ref = bellman_target(traction.reg, traction.model, traction.stage_cost, x, np.array([u]), [0.7], th, 0.01)
        assert J(np.array([u])) == pytest.approx(ref, rel=1e-13)


def test_traction_actor_against_grid(traction, rng):
    for _ in range(5):
        x = traction.sample_ball(rng, 1, traction.R)[0]
        w = np.array([rng.uniform(0.5, 1.0)])
        th = rng.uniform(*traction.theta_set)
        J = bellman_objective(traction.reg, traction.model, traction.stage_cost, x, w, th, 0.01)
        us = np.linspace(traction.box.lower[0], traction.box.upper[0], 10001)
        vals = np.array([J(np.array([u])) for u in us])
        res = solve_actor(traction.reg, traction.model, traction.stage_cost, x, w, th, 0.01, traction.box, backup=traction.clf.mu(x, th))
        assert res.value <= vals.min() + 10 * ActorConfig().tol_u


def test_policy_gradient_examples():
    p = PolicyParams(np.array([0.4]), 0.1)
    assert np.array_equal(policy_gradient_step(p, [0.0]).varsigma, p.varsigma)
    assert np.array_equal(policy_gradient_step(PolicyParams(np.array([0.4]), 0.0), [3.0]).varsigma, p.varsigma)
    q = PolicyParams(np.array([0.0]), 0.1)
    grad = 2 * (q.varsigma - 1.0)
    assert policy_gradient_step(q, grad).varsigma[0] == pytest.approx(0.2)
    with pytest.raises(ConfigurationError):
        PolicyParams(np.array([np.nan]), 0.1)


def test_sigma_gradient_and_action():
    box = ControlBox([-10.0], [10.0])
    p = PolicyParams(np.array([0.0]), 0.1)
    backup = np.array([0.0])
    grad = sigma_gradient(lambda u: float((u[0] - 1.0) ** 2), p, backup, box)
    assert grad[0] == pytest.approx(-2.0, rel=1e-6)
    assert policy_action(PolicyParams(np.array([50.0]), 0.1), backup, box)[0] == 10.0
