"""
Limits of deep wells and weak coupling
======================================

As lam grows the solution concentrates in the well bottom and approaches the
Dirichlet problem  -lap u + mu phi_u u = u^(p-1)  in the unit ball.  As mu
shrinks it approaches the local equation  -lap u + lam V u = u^(p-1).

The mu-limit is fast (the distance is linear in mu).  The lam-limit is slow
for this well: V grows quadratically from the ball's edge, so the solution
leaks into a layer of width about lam^(-1/4) and behaves like the Dirichlet
solution of a slightly larger ball.  With u_R(x) = R^(-3) u_1(x/R) (p = 8/3)
the energy scales like R^(-5), which lets us read off an effective radius.

Run with ``python3 demos/03_limit_problems.py`` (about a minute).
"""

# %%
import numpy as np

from spwell.analysis import BOTH, LAMBDA_TO_INF, MU_TO_ZERO, convergence_study
from spwell.functional import Constants
from spwell.grid import BOUNDED_WELL, PotentialSpec, build_grid

p = 8 / 3
grid = build_grid("radial", 12.0, 1000)
well = PotentialSpec(BOUNDED_WELL)
V, omega = well.sample(grid), well.omega(grid)
C = Constants.build(grid, omega, p)

# %%
limit, rows = convergence_study(LAMBDA_TO_INF, [1e2, 1e3, 1e4], grid, V, omega, p,
                                mu=0.05 * C.mu_star, constants=C)
print(f"Dirichlet limit energy: {limit.energy:.3f}")
print(" lam      H1 dist   leak     energy   R_eff-1   (R_eff-1) lam^(1/4)")
for r in rows:
    energy = limit.energy + r.energy_gap
    R = (limit.energy / energy) ** (1 / 5)
    print(f"{r.lam:6.0f}  {r.distance:8.3f}  {r.mass_outside_omega:.4f}  {energy:8.3f}  {R - 1:.4f}"
          f"    {(R - 1) * r.lam**0.25:.3f}")
print("ratio of distances, lam = 1e4 vs 1e2:", round(rows[-1].distance / rows[0].distance, 3))

# %% [markdown]
# The last column is roughly constant: the distance to the limit is governed
# by the lam^(-1/4) edge layer, so a hundredfold increase of lam buys only a
# factor of about sqrt(10) in the radius defect.

# %%
limit, rows = convergence_study(MU_TO_ZERO, [f * C.mu_star for f in (1e-1, 1e-2, 1e-3)], grid, V, omega, p,
                                lam=1e3, constants=C)
print("\n mu/mu*   lam-norm distance to the local solution")
for r in rows:
    print(f"{r.mu / C.mu_star:7.0e}  {r.distance:.3e}")

# %%
schedule = [(1e2, 1e-1 * C.mu_star), (1e3, 1e-2 * C.mu_star), (1e4, 1e-3 * C.mu_star)]
limit, rows = convergence_study(BOTH, schedule, grid, V, omega, p, constants=C)
print("\n lam     mu/mu*   H1 distance to the local Dirichlet solution")
for r in rows:
    print(f"{r.lam:6.0f}  {r.mu / C.mu_star:7.0e}  {r.distance:.3f}")
