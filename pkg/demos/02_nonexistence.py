"""
When the nonlocal term wins
===========================

For p = 3 the equation has no nontrivial solution once mu > 1/4.  The
identity behind this is the inequality

    int |u|^3  <=  1/(4 mu) int |grad u|^2 + mu int phi_u u^2,

and for 2 < p < 3 the nonnegativity of h(t) = t^2 + t^3 - t^p.  Numerically
the mountain-pass path has no barrier to cross: it slides down to zero.

Run with ``python3 demos/02_nonexistence.py`` (a few seconds per start).
"""

# %%
import numpy as np

from spwell.analysis import cross_term_inequality_check, h_function, nonexistence_threshold, sobolev_S
from spwell.functional import Constants, Functional, SolverParams
from spwell.grid import BOUNDED_WELL, PotentialSpec, build_grid, vb_measure
from spwell.solver import mountain_pass_solve

# %% [markdown]
# Threshold values: 1/4 at p = 3, and for p < 3 a value that depends on the
# measure of {V < b} through the Sobolev constant.

# %%
S = sobolev_S()
well = PotentialSpec(BOUNDED_WELL)
print(f"S = {S:.5f},  S^(3/2) = {S**1.5:.3f}")
print("p = 3   :", nonexistence_threshold(3.0, vb_measure(well, 1.0), S))
print("p = 2.5 : unit ball", round(nonexistence_threshold(2.5, 4 * np.pi / 3, S), 4))
t = np.linspace(0, 10, 10_000)
for p in (2.2, 2.5, 2.8):
    print(f"min h(t), t > 0, p={p}: {h_function(t[1:], p).min():.2e}")

# %% [markdown]
# The cross-term inequality on a smooth field:

# %%
grid = build_grid("radial", 12.0, 400)
u = np.exp(-grid.r**2)
for mu in (0.1, 0.3, 1.0):
    lhs, rhs = cross_term_inequality_check(grid, u, mu)
    print(f"mu={mu}: int|u|^3 = {lhs:.4f} <= {rhs:.4f}")

# %% [markdown]
# A handful of perturbed starting paths at mu = 0.3; none converges to a
# nontrivial critical point.

# %%
V, omega = well.sample(grid), well.omega(grid)
C = Constants.build(grid, omega, 3.0)
for lam in (10.0, 100.0):
    for seed, scale in ((0, 1.0), (1, 1.25), (2, 1.5)):
        fun = Functional(grid, V, SolverParams(lam=lam, mu=0.3, p=3.0, T=C.T, max_outer=1500, seed=seed))
        rep = mountain_pass_solve(fun, C.e0, path_scale=scale)
        print(f"lam={lam:5.0f} seed={seed} scale={scale}: {rep.outcome:16s} ||u|| = {rep.norm_lambda:.2e}")
