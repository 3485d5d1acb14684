"""Cost ratio over a grid of traction initial conditions.

Sweeps speed in [70, 110] and slip in [0.05, 0.5] on a 9 x 10 grid and
prints the ratio table (rows: speed, columns: slip). Pass ``--workers N``
to spread the cells over processes.
"""

import argparse
import warnings

import numpy as np

from stabilrl import RunConfig, SweepSpec, sweep
from stabilrl.runner import UNREACHED

warnings.simplefilter("ignore", RuntimeWarning)

parser = argparse.ArgumentParser()
parser.add_argument("--workers", type=int, default=1)
args = parser.parse_args()

spec = SweepSpec({0: (70.0, 110.0, 9), 1: (0.05, 0.5, 10)})
rows = sweep(RunConfig(problem="traction"), spec, workers=args.workers)

slips = np.linspace(0.05, 0.5, 10)
print("v \\ s  " + " ".join(f"{s:6.2f}" for s in slips))
for i, v in enumerate(np.linspace(70.0, 110.0, 9)):
    cells = rows[i * 10 : (i + 1) * 10]
    print(f"{v:6.1f} " + " ".join("   n/a" if c.C == UNREACHED else f"{c.C:6.3f}" for c in cells))

vals = [c.C for c in rows if c.C != UNREACHED]
print(f"best ratio {min(vals):.3f}, worst {max(vals):.3f}, mean {np.mean(vals):.3f}")
print(f"cells without any fallback: {sum(c.fallback_count == 0 for c in rows)} of {len(rows)}")
