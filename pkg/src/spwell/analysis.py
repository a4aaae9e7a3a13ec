"""
Post-processing of computed solutions: decay envelopes, localisation,
nonexistence thresholds, the explicit L-infinity bound, Sobolev constants and
convergence tables for the limit problems.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import RADIAL, Grid, GridError, build_grid
from .poisson import nonlocal_energy


# ---------------------------------------------------------------------------
# constants


def sobolev_S() -> float:
    """Best constant of D^{1,2}(R^3) -> L^6(R^3): ``3 (pi / 2)^(4/3)``."""
    return 3.0 * (math.pi / 2.0) ** (4.0 / 3.0)


def bubble_rayleigh_quotient(L: float = 1000.0, n: int = 100_000) -> float:
    """``int |grad W|^2 / |W|_6^2`` for the bubble ``(1 + r^2)^(-1/2)`` on a radial grid.

    The bubble is shifted by its value at ``L`` so the field satisfies the
    grid's Dirichlet condition; the quotient is then an upper estimate of S.
    """
    g = build_grid(RADIAL, L, n)
    W = 1.0 / np.sqrt(1.0 + g.r**2) - 1.0 / np.sqrt(1.0 + L**2)
    return g.grad_energy(W) / g.integrate(W**6) ** (1.0 / 3.0)


def rayleigh_quotient(grid: Grid, u) -> float:
    """Sobolev quotient ``int |grad u|^2 / |u|_6^2`` of a grid field."""
    den = grid.integrate(np.abs(u) ** 6) ** (1.0 / 3.0)
    if den == 0:
        raise GridError("zero field")
    return grid.grad_energy(u) / den


def random_field_corpus(grid: Grid, count: int = 64, seed: int = 20240607):
    """Seed-pinned smooth positive fields (sums of Gaussian shells/blobs)."""
    rng = np.random.default_rng(seed)
    r = grid.radius
    L = grid.L
    for _ in range(count):
        k = int(rng.integers(1, 4))
        u = np.zeros(grid.shape)
        for _ in range(k):
            c = rng.uniform(0.0, 0.5 * L)
            s = rng.uniform(0.05, 0.3) * L
            a = rng.uniform(0.2, 1.0)
            u += a * np.exp(-(((r - c) / s) ** 2))
        # vanish on the outer boundary
        yield u * np.clip(1.0 - (r / L) ** 2, 0.0, None)


def empirical_embedding_constants(grid: Grid, V, exponents, count: int = 64, seed: int = 20240607) -> dict:
    """Largest observed ``|u|_s / ||u||`` (norm with lam = 1) over the corpus."""
    V = np.asarray(V, dtype=float)
    best = {float(s): 0.0 for s in exponents}
    for u in random_field_corpus(grid, count, seed):
        nrm = math.sqrt(grid.grad_energy(u) + grid.integrate(V * u * u))
        if nrm == 0:
            continue
        for s in best:
            best[s] = max(best[s], grid.integrate(np.abs(u) ** s) ** (1.0 / s) / nrm)
    return best


# ---------------------------------------------------------------------------
# nonexistence ledger


def h_function(t, p: float):
    """``t^2 + t^3 - t^p``; nonnegative for ``t >= 0`` when ``2 < p < 3``."""
    t = np.asarray(t, dtype=float)
    out = t * t + t**3 - t**p
    return float(out) if out.ndim == 0 else out


def nonexistence_threshold(p: float, vb_measure: float, S: float | None = None):
    """Smallest ``mu`` covered by the nonexistence result, or ``None``.

    ``p = 3`` gives 1/4 regardless of the well; for ``2 < p < 3`` the bound
    ``1 / (4 (1 - |V_b|^(2/3) / S))`` needs ``|V_b| < S^(3/2)``.
    """
    if not 2.0 < p <= 3.0:
        raise ValueError(f"p must lie in (2, 3], got {p}")
    if p == 3.0:
        return 0.25
    S = sobolev_S() if S is None else float(S)
    if not (vb_measure >= 0 and vb_measure < S**1.5):
        return None
    return 1.0 / (4.0 * (1.0 - vb_measure ** (2.0 / 3.0) / S))


def cross_term_inequality_check(grid: Grid, u, mu: float, mask=None) -> tuple:
    """Both sides of ``int |u|^3 <= (1/(4 mu)) int |grad u|^2 + mu Q(u)``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    u = grid.check_field(u)
    lhs = grid.integrate(np.abs(u) ** 3)
    rhs = grid.grad_energy(u, mask) / (4.0 * mu) + mu * nonlocal_energy(grid, u)
    return lhs, rhs


# ---------------------------------------------------------------------------
# a priori bounds


def moser_linf_bound(p: float, T: float, S: float, d_p: float) -> float:
    """Explicit L-infinity bound ``C0`` from Moser iteration, ``sigma = 6 / p``.

    >>> round(moser_linf_bound(3.0, 2.0, 5.478, 0.5), 4)
    1.4604
    """
    if not 2.0 < p < 6.0:
        raise ValueError(f"p must lie in (2, 6), got {p}")
    if min(T, S, d_p) <= 0:
        raise ValueError("T, S and d_p must be positive")
    sigma = 6.0 / p
    a = sigma ** (sigma / (sigma - 1.0) ** 2)
    b = ((d_p * T) ** (p - 2.0) / S) ** (1.0 / (2.0 * (sigma - 1.0)))
    return a * b * T / math.sqrt(S)


def nehari_defect(fun, u) -> float:
    """``| ||u||_lam^2 + mu Q(u) - |u+|_p^p |`` for a :class:`Functional`."""
    u = fun.project(u)
    mu = fun.params.mu
    Q = fun.nonlocal_energy(u) if mu else 0.0
    return abs(fun.norm2_lambda(u) + mu * Q - fun.power_term(u))


# ---------------------------------------------------------------------------
# decay and localisation


@dataclass(frozen=True)
class DecayFit:
    """Envelope ``A lam^(-1/2) exp(-beta lam^(1/2) (r - R))`` fitted to a tail."""

    A: float
    beta: float
    R: float
    rms_log_error: float
    envelope_margin: float
    nodes: int

    def envelope(self, r, lam: float):
        return self.A / math.sqrt(lam) * np.exp(-self.beta * math.sqrt(lam) * (np.asarray(r) - self.R))

    def as_dict(self) -> dict:
        return asdict(self)


def radial_profile(grid: Grid, u):
    """``(r, u)`` for radial grids; shell maxima of ``u`` for box grids."""
    u = grid.check_field(u)
    if grid.kind == RADIAL:
        return grid.r.copy(), u.copy()
    r = grid.radius.ravel()
    k = np.floor(r / grid.h).astype(int)
    m = int(k.max()) + 1
    prof = np.full(m, -np.inf)
    np.maximum.at(prof, k, u.ravel())
    rad = (np.arange(m) + 0.5) * grid.h
    keep = np.isfinite(prof)
    return rad[keep], prof[keep]


def fit_decay(grid: Grid, u, lam: float, R: float, r_max: float | None = None) -> DecayFit:
    """Log-linear tail fit on ``R < r < 0.9 L``, raised to an upper envelope."""
    if not (lam > 0 and R > 0):
        raise ValueError("lambda and R must be positive")
    r, v = radial_profile(grid, u)
    r_max = 0.9 * grid.L if r_max is None else r_max
    sel = (r > R) & (r < r_max)
    if np.count_nonzero(sel) < 8:
        raise ValueError("fewer than 8 nodes in the fit range")
    r, v = r[sel], v[sel]
    if np.any(v <= 0):
        raise ValueError("profile is not positive on the fit range")
    x = r - R
    y = np.log(v)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (icpt + slope * x)
    rms = float(np.sqrt(np.mean(resid**2)))
    icpt = icpt + max(0.0, float(resid.max()))
    while np.min(icpt + slope * x - y) < 0:
        icpt = np.nextafter(icpt, np.inf)
    margin = float(np.min(icpt + slope * x - y))
    sq = math.sqrt(lam)
    return DecayFit(A=math.exp(icpt) * sq, beta=float(-slope / sq), R=float(R), rms_log_error=rms,
                    envelope_margin=margin, nodes=int(x.size))


def localization_mass(grid: Grid, u, omega) -> float:
    """Fraction of ``int u^2`` carried by the well bottom."""
    u = grid.check_field(u)
    total = grid.integrate(u * u)
    if total == 0:
        raise ValueError("zero field")
    inside = grid.integrate(np.where(np.asarray(omega, dtype=bool), u * u, 0.0))
    return min(max(inside / total, 0.0), 1.0)


def h1_distance(grid: Grid, u, v) -> float:
    d = np.asarray(u) - np.asarray(v)
    return math.sqrt(grid.grad_energy(d) + grid.integrate(d * d))


# ---------------------------------------------------------------------------
# limit studies

LAMBDA_TO_INF = "LambdaToInf"
MU_TO_ZERO = "MuToZero"
BOTH = "Both"


@dataclass(frozen=True)
class ConvergenceRow:
    value: float
    distance: float | None
    mass_outside_omega: float | None
    energy_gap: float | None
    outcome: str
    mu: float | None = None
    lam: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def convergence_study(kind: str, schedule, grid: Grid, V, omega, p: float, *, mu: float = 0.0,
                      lam: float = 1.0, base=None, constants=None):
    """Distances of ``u_{lam,mu}`` to the matching limit solution along ``schedule``.

    ``LambdaToInf`` varies ``lam`` at fixed ``mu`` against the Dirichlet limit
    (H1 distance); ``MuToZero`` varies ``mu`` at fixed ``lam`` against the
    local Schroedinger solution (``lam``-norm); ``Both`` takes ``(lam, mu)``
    pairs against the local Dirichlet solution (H1).  Returns the limit
    report and the rows.
    """
    from .functional import Constants, Functional, SolverParams
    from .solver import (mountain_pass_solve, solve_dirichlet_limit, solve_dirichlet_local,
                         solve_schrodinger_limit)

    omega = np.asarray(omega, dtype=bool)
    C = constants or Constants.build(grid, omega, p)
    base = base or SolverParams(lam=1.0, mu=0.0, p=p)
    base = base.with_(p=p, T=C.T)

    if kind == LAMBDA_TO_INF:
        limit = solve_dirichlet_limit(omega, mu, p, grid, base, C)
        points = [(float(x), mu) for x in schedule]
    elif kind == MU_TO_ZERO:
        limit = solve_schrodinger_limit(grid, V, base.with_(lam=lam, mu=0.0), C.e0)
        points = [(lam, float(x)) for x in schedule]
    elif kind == BOTH:
        limit = solve_dirichlet_local(omega, p, grid, base, C)
        points = [(float(a), float(b)) for a, b in schedule]
    else:
        raise ValueError(f"unknown study kind {kind!r}")

    rows = []
    for lam_k, mu_k in points:
        value = mu_k if kind == MU_TO_ZERO else lam_k
        fun = Functional(grid, V, base.with_(lam=lam_k, mu=mu_k))
        try:
            rep = mountain_pass_solve(fun, C.e0)
        except Exception as exc:  # row-level failure, study goes on
            rows.append(ConvergenceRow(value, None, None, None, f"failed: {exc}", mu_k, lam_k))
            continue
        if not (rep.converged and limit.converged):
            rows.append(ConvergenceRow(value, None, None, None, rep.outcome, mu_k, lam_k))
            continue
        u, w = rep.solution, limit.solution
        if kind == MU_TO_ZERO:
            dist = fun.norm_lambda(u - w)
        else:
            dist = h1_distance(grid, u, w)
        rows.append(ConvergenceRow(value, dist, 1.0 - localization_mass(grid, u, omega),
                                   rep.energy - limit.energy, rep.outcome, mu_k, lam_k))
    return limit, rows


def strictly_decreasing(values, slack: float = 1e-3) -> bool:
    """Each entry below its predecessor up to a relative ``slack``."""
    v = [float(x) for x in values]
    return all(b <= a * (1.0 + slack) for a, b in zip(v, v[1:]))
