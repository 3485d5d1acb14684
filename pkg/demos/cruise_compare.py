"""Learned controller against the backup controller on cruise control.

Both loops start at 10 m/s with the same estimator initialisation; the
transient cost ratio compares their accumulated stage cost up to each
run's own arrival in the target band around 14 m/s.
"""

import warnings

from stabilrl import RunConfig, compare, get_problem

warnings.simplefilter("ignore", RuntimeWarning)

problem = get_problem("cruise")
ratio, learned, backup = compare(problem, RunConfig(problem="cruise"))

for name, log, K in (("learned", learned, ratio.K_u), ("backup", backup, ratio.K_mu)):
    cost = sum(rec.stage_cost_value for rec in log.records[: K + 1])
    print(f"{name:8s} reaches the band at k = {K:4d}, transient cost {cost:12.2f}")
print(f"cost ratio C_pct = {ratio.value:.4f}")
print(f"estimate after the run: {learned.final_theta_hat}, true: {problem.model.theta_true}")
