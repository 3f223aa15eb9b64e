"""A point pushed into the cavity of an annulus slides along the inner circle.

Run with ``python3 demos/shell_sliding.py``.  Prints the trajectory at a few
times, the certificate, and a self-convergence table.
"""

import numpy as np

from ncskorohod import Path, SemiconvexPotential, SphericalShell, certify, convergence_study, solve

shell = SphericalShell([0.0, 0.0], 1.0, 2.0)
phi = SemiconvexPotential(shell)

t = np.linspace(0.0, 1.0, 4001)
m = Path(t, t[:, None] * np.array([-2.0, 0.0]))
sol = solve(phi, [1.5, 0.2], m)

print("   t       x1       x2      |x|      |k|_var")
for ti in (0.0, 0.25, 0.5, 0.75, 1.0):
    i = int(np.searchsorted(sol.times, ti))
    x = sol.x[i]
    print(f"{ti:5.2f} {x[0]:8.4f} {x[1]:8.4f} {np.linalg.norm(x):8.4f} {sol.cumvar[i]:10.4f}")

cert = certify(phi, sol, m)
print()
for c in cert.checks:
    print(f"{c.name:22s} residual {c.residual:.2e}  tol {c.tolerance:.1e}  {'ok' if c.passed else 'FAIL'}")

rep = convergence_study(phi, [1.5, 0.2], m, [125, 250, 500, 1000])
print()
print("steps   sup|x - x_ref|")
for n, e in zip(rep.steps, rep.errors_x):
    print(f"{n:5d}   {e:.3e}")
print(f"observed rate {rep.rate_x:.2f}")
