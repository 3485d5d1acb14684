"""Stability constants and the backup-controller certificate.

Prints the constants derived for each benchmark and checks the sampled
decay of the backup controller on the certification grid, first at the
nominal period and then at a period far too coarse to pass.
"""

import warnings

from stabilrl import compute_bounds, get_problem, verify_decay_backup
from stabilrl.supervisor import certification_grid

warnings.simplefilter("ignore", RuntimeWarning)

for name in ("traction", "cruise"):
    problem = get_problem(name)
    bounds = compute_bounds(problem, problem.defaults["delta"])
    print(f"== {name}")
    print(bounds.report())
    grid, thetas = certification_grid(problem), problem.theta_grid()
    for delta in (problem.defaults["delta"], 10.0):
        rep = verify_decay_backup(problem.clf, problem.model, grid, thetas, delta, core_radius=bounds.r_star)
        print(f"certificate: {rep.summary()}")
    print()
