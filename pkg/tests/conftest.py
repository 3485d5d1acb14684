import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stabilrl.problems import get_problem
from stabilrl.supervisor import compute_bounds

settings.register_profile("default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_RESULTS = {}


def record_acceptance(num, ok, detail):
    ACCEPTANCE_RESULTS[num] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture(scope="session")
def traction():
    return get_problem("traction")


@pytest.fixture(scope="session")
def cruise():
    return get_problem("cruise")


@pytest.fixture(scope="session", params=["traction", "cruise"])
def problem(request):
    return get_problem(request.param)


_BOUNDS = {}


def bounds_for(problem, delta=0.01):
    key = (problem.name, delta)
    if key not in _BOUNDS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _BOUNDS[key] = compute_bounds(problem, delta)
    return _BOUNDS[key]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
