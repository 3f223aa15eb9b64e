"""Reflected Brownian motion on the half-line.

The terminal value X_1 started from 0 has the law of |B_1|, so its mean is
sqrt(2/pi).  The simulation is compared with the running-minimum formula on
the very same Brownian increments.
"""

import math

import numpy as np

from ncskorohod import DiffusionField, HalfSpace, SemiconvexPotential, brownian, monte_carlo

n_paths, n_steps = 2000, 2000
phi = SemiconvexPotential(HalfSpace([-1.0], 0.0))
unit = DiffusionField(lambda t, x: np.ones(np.shape(x) + (1,)), 1, name="unit")

rep = monte_carlo(phi, [0.0], None, unit, 1.0, n_steps, n_paths, base_seed=0, functionals=("terminal", "variation"),
                  keep_values=True)

oracle = []
for j in range(n_paths):
    w = np.cumsum(brownian(j, 1.0, n_steps, 1).increments[:, 0])
    oracle.append(w[-1] - min(w.min(), 0.0))
oracle = np.array(oracle)

mean = float(rep.stats["terminal"].mean[0])
se = float(rep.stats["terminal"].std_error[0])
print(f"simulated mean X_1   {mean:.4f} +- {se:.4f}")
print(f"formula on same BM   {oracle.mean():.4f}")
print(f"sqrt(2/pi)           {math.sqrt(2 / math.pi):.4f}")
print(f"max path difference  {np.max(np.abs(rep.values['terminal'][:, 0] - oracle)):.1e}")
print(f"mean |K|_1           {float(rep.stats['variation'].mean):.4f}")
