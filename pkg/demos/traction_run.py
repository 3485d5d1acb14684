"""Wheel-slip regulation with the supervised actor-critic.

Starts at 85 m/s with slip 0.35, runs 10 s of model time at a 10 ms
sampling period and prints the slip trajectory at a coarse stride together
with the fallback statistics.
"""

import warnings

import numpy as np

from stabilrl import LoopConfig, compute_bounds, get_problem, run

warnings.simplefilter("ignore", RuntimeWarning)

problem = get_problem("traction")
bounds = compute_bounds(problem, 0.01)
log = run(problem, LoopConfig(delta=0.01, horizon=1000), x0=np.array([85.0, 0.35]), bounds=bounds)

err = np.array([problem.err_norm(rec.x) for rec in log.records])
print(f"target slip {problem.target[1]}, tolerance r = {problem.r}")
print("   k      v        s      u      fallback")
for rec in log.records[:120:10]:
    print(f"{rec.k:4d} {rec.x[0]:8.3f} {rec.x[1]:7.4f} {rec.u[0]:7.4f}  {int(rec.fallback)}")

fallbacks = sum(rec.fallback for rec in log.records)
print(f"first sample in the target band: k = {log.reach_time(err, problem.r)}")
print(f"stays in the band (intra-sample included) from k = {log.hold_time(err, problem.r)}")
print(f"fallback steps: {fallbacks} of {len(log.records)}")
print(f"final state: v = {log.final_x[0]:.3f}, s = {log.final_x[1]:.5f}")
