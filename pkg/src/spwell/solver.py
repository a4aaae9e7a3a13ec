"""
Critical points of the (truncated) energy.

``mountain_pass_solve`` deforms a discrete path from 0 to ``e0``: the highest
interior node takes a preconditioned descent step transverse to the path,
is re-maximised along the local path tangent, and the remaining nodes are
redistributed by arclength.  Once the top node is an approximate critical
point it is handed to ``newton_refine``, an inexact Newton-Krylov iteration
on the untruncated Euler-Lagrange residual.

The limit problems reuse the same pipeline: a Dirichlet mask for the well
bottom, no potential, and/or ``mu = 0``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .functional import Constants, Functional, SolverError, SolverParams
from .grid import RADIAL, Grid

log = logging.getLogger(__name__)

CONVERGED = "Converged"
COLLAPSED = "CollapsedToZero"
EXHAUSTED = "BudgetExhausted"

# relative threshold (against ||e0||_lam) below which a run counts as collapsed
COLLAPSE_FRACTION = 1e-6


@dataclass
class SolveReport:
    """Outcome of a solve; ``to_json`` gives the single-line record."""

    solution: np.ndarray = field(repr=False)
    outcome: str
    energy: float
    norm_lambda: float
    linf: float
    residual_max: float
    nehari_defect: float
    iterations: int
    mp_level: float | None = None
    newton_steps: int = 0
    T: float | None = None
    within_T: bool | None = None
    diagnostics: dict = field(default_factory=dict)
    path: "PathState | None" = field(default=None, repr=False)

    JSON_KEYS = (
        "outcome", "energy", "norm_lambda", "linf", "residual_max", "nehari_defect",
        "iterations", "newton_steps", "mp_level", "T", "within_T",
    )

    @property
    def converged(self) -> bool:
        return self.outcome == CONVERGED

    def record(self) -> dict:
        out = {k: _plain(getattr(self, k)) for k in self.JSON_KEYS}
        out["diagnostics"] = {k: _plain(v) for k, v in sorted(self.diagnostics.items())}
        return out

    def to_json(self) -> str:
        return json.dumps(self.record(), separators=(",", ":"), allow_nan=False, default=_plain)


def _plain(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    return x


@dataclass
class PathState:
    """Discrete path ``nodes[0] = 0 ... nodes[N] = e0`` with node energies.

    ``descents`` records ``(before, after)`` energies of every accepted
    deformation step of the top node.
    """

    nodes: list = field(repr=False)
    energies: np.ndarray
    descents: list = field(default_factory=list)

    @property
    def top(self) -> int:
        # argmax returns the lowest index on ties
        return 1 + int(np.argmax(self.energies[1:-1]))


# ---------------------------------------------------------------------------
# reports


def _report(fun: Functional, u, outcome, iterations, **kw) -> SolveReport:
    u = fun.project(u)
    F = fun.residual(u)
    nrm = fun.norm_lambda(u)
    mu = fun.params.mu
    Q = fun.nonlocal_energy(u) if mu else 0.0
    T = fun.params.T
    return SolveReport(
        solution=u,
        outcome=outcome,
        energy=fun.energy(u),
        norm_lambda=nrm,
        linf=float(np.max(np.abs(u))),
        residual_max=float(np.max(np.abs(F))),
        nehari_defect=abs(fun.norm2_lambda(u) + mu * Q - fun.power_term(u)),
        iterations=iterations,
        T=T,
        within_T=None if T is None else bool(nrm <= T),
        **kw,
    )


# ---------------------------------------------------------------------------
# linear algebra


def jacobian_apply(fun: Functional, u, v) -> np.ndarray:
    """``F'(u) v = -lap v + lam V v + mu phi_u v + 2 mu (Phi*(u v)) u - (p-1)(u+)^(p-2) v``."""
    return fun.jacobian_apply(u, v)


def _precond_operator(fun: Functional):
    """SPD approximation of the inverse Jacobian, Euclidean form."""
    N = fun.grid.size
    if fun.grid.kind == RADIAL:
        fun.sobolev_gradient(np.ones(fun.grid.shape))  # builds the factorisation
        lu = fun._factor
        return spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
    A = fun.precond_matrix()
    Minv = sp.diags(1.0 / A.diagonal())

    def solve(x):
        z, info = spla.cg(A, x, rtol=1e-8, maxiter=fun.params.cg_maxiter, M=Minv)
        if info != 0:
            raise SolverError("CG did not converge in the preconditioner")
        return z

    return spla.LinearOperator((N, N), matvec=solve, dtype=float)


def _jacobian_operator(fun: Functional, u):
    N = fun.grid.size
    shape = fun.grid.shape
    w = fun.w
    off = None if fun.mask is None else ~fun.mask

    def mv(x):
        x = x.reshape(shape)
        y = w * fun.jacobian_apply(u, x)
        if off is not None:
            y = y + np.where(off, x, 0.0)
        return y.ravel()

    return spla.LinearOperator((N, N), matvec=mv, dtype=float)


def _dual_norm(fun: Functional, F) -> float:
    z = fun.sobolev_gradient(F)
    return float(np.sqrt(max(np.sum(fun.w * F * z), 0.0)))


def positivity_polish(fun: Functional, u) -> np.ndarray:
    """One frozen-coefficient step ``(-lap + lam V + mu phi_u) z = (u+)^(p-1)``.

    At a solution this reproduces ``u``; the local operator is an M-matrix, so
    the solve is sign preserving and resolves exponentially small tails with
    relative accuracy.
    """
    u = fun.project(u)
    p, mu = fun.params.p, fun.params.mu
    diag = fun.params.lam * fun.V
    if mu:
        diag = diag + mu * fun.phi(u)
    A = fun.K + sp.diags((fun.w * diag).ravel())
    rhs = (fun.w * np.maximum(u, 0.0) ** (p - 1.0)).ravel()
    if fun.mask is not None:
        on = fun.mask.ravel()
        A = A.tocsr()[on][:, on]
        rhs = rhs[on]
    if fun.grid.kind == RADIAL:
        A = A.todia() if sp.issparse(A) else A
        n = A.shape[0]
        ab = np.zeros((3, n))
        d = A.diagonal()
        e = A.diagonal(1)
        ab[0, 1:] = e
        ab[1] = d
        ab[2, :-1] = e
        z = scipy.linalg.solve_banded((1, 1), ab, rhs)
    else:
        z = spla.spsolve(A.tocsc(), rhs)
    out = np.zeros(fun.grid.size)
    if fun.mask is not None:
        out[fun.mask.ravel()] = z
    else:
        out = z
    return out.reshape(fun.grid.shape)


# ---------------------------------------------------------------------------
# Newton


def newton_refine(fun: Functional, u0, *, collapse_norm: float = 0.0,
                  entry_threshold: float | None = 1e-2, polish: bool = True) -> SolveReport:
    """Inexact Newton-Krylov on ``F(u) = 0``.

    Inner solves use preconditioned MINRES (the Jacobian at a mountain-pass
    point is indefinite); steps are damped by backtracking on the dual norm
    of ``F``.  ``entry_threshold`` rejects starting points whose relative
    dual residual exceeds it (``None`` disables the check).
    """
    params = fun.params
    u = fun.project(np.array(u0, dtype=float))
    nrm = fun.norm_lambda(u)
    hist: list = []
    if nrm <= collapse_norm or not np.any(u):
        return _report(fun, u, COLLAPSED, 0, diagnostics={"reason": "trivial start"})
    F = fun.residual(u)
    if np.max(np.abs(F)) <= params.tol:
        return _finish(fun, u, 0, hist, polish)
    merit = _dual_norm(fun, F)
    scale = fun.precond_norm(u)
    if entry_threshold is not None and merit > entry_threshold * scale:
        return _report(fun, u, EXHAUSTED, 0,
                       diagnostics={"reason": "newton entry threshold", "relative_residual": merit / scale})
    M = _precond_operator(fun)
    grow = 0
    for k in range(1, params.newton_max + 1):
        forcing = min(1e-3, merit / scale)
        J = _jacobian_operator(fun, u)
        rhs = -(fun.w * F).ravel()
        dx, info = spla.minres(J, rhs, M=M, rtol=max(forcing, 1e-14), maxiter=500)
        dx = fun.project(dx.reshape(fun.grid.shape))
        alpha = 1.0
        while True:
            trial = u + alpha * dx
            Ft = fun.residual(trial)
            mt = _dual_norm(fun, Ft)
            if mt <= (1.0 - 1e-4 * alpha) * merit or alpha < 1e-6:
                break
            alpha *= 0.5
        grow = grow + 1 if mt >= merit else 0
        u, F, merit = trial, Ft, mt
        hist.append(float(np.max(np.abs(F))))
        scale = fun.precond_norm(u)
        if fun.norm_lambda(u) <= collapse_norm:
            return _report(fun, u, COLLAPSED, k, newton_steps=k, diagnostics={"newton_history": hist})
        if hist[-1] <= params.tol:
            return _finish(fun, u, k, hist, polish)
        if grow >= 5:
            break
    return _report(fun, u, EXHAUSTED, len(hist), newton_steps=len(hist),
                   diagnostics={"reason": "newton budget", "newton_history": hist})


def _finish(fun: Functional, u, steps, hist, polish) -> SolveReport:
    tol = fun.params.tol
    if polish:
        v = positivity_polish(fun, u)
        if np.max(np.abs(fun.residual(v))) <= max(tol, np.max(np.abs(fun.residual(u)))):
            u = v
    rep = _report(fun, u, CONVERGED, steps, newton_steps=steps, diagnostics={"newton_history": hist})
    if rep.residual_max > tol or np.min(u) < -1e-12 or rep.linf <= 0:
        rep.outcome = EXHAUSTED
        rep.diagnostics["reason"] = "postcondition failed"
    return rep


# ---------------------------------------------------------------------------
# mountain pass


def _initial_path(fun: Functional, e0, N: int, path_scale: float, seed: int | None):
    t = np.linspace(0.0, 1.0, N + 1) ** path_scale
    path = [ti * e0 for ti in t]
    if seed:
        rng = np.random.default_rng(seed)
        r = fun.grid.radius
        amp = rng.uniform(0.05, 0.3) * np.max(np.abs(e0))
        c = rng.uniform(0.0, 0.5) * fun.grid.L
        s = rng.uniform(0.05, 0.3) * fun.grid.L
        bump = fun.project(np.exp(-(((r - c) / s) ** 2)) * np.clip(1 - (r / fun.grid.L) ** 2, 0, None))
        bump = bump * rng.choice([-1.0, 1.0])
        for k in range(1, N):
            path[k] = path[k] + amp * np.sin(np.pi * k / N) * bump
    return [fun.project(g) for g in path]


def _reparametrize(fun, path, k):
    """Equal-arclength nodes on both sides of the pinned node ``k``."""
    def resample(seg, m):
        d = [fun.precond_norm(seg[i + 1] - seg[i]) for i in range(len(seg) - 1)]
        s = np.concatenate(([0.0], np.cumsum(d)))
        if s[-1] == 0:
            return [seg[0]] * (m + 1)
        targets = np.linspace(0.0, s[-1], m + 1)
        out = []
        for t in targets:
            i = min(int(np.searchsorted(s, t, side="right")) - 1, len(seg) - 2)
            a = 0.0 if d[i] == 0 else (t - s[i]) / d[i]
            out.append((1 - a) * seg[i] + a * seg[i + 1])
        out[0], out[-1] = seg[0], seg[-1]
        return out

    left = resample(path[: k + 1], k)
    right = resample(path[k:], len(path) - 1 - k)
    return left[:-1] + [path[k]] + right[1:]


def mountain_pass_solve(fun: Functional, e0, *, path_scale: float = 1.0, seed: int | None = None,
                        refine: bool = True) -> SolveReport:
    """Mountain-pass search between 0 and ``e0``, then Newton refinement.

    The path phase works on the truncated energy when ``fun.params.T`` is
    set and on the plain energy otherwise.  ``seed`` (default: the params
    seed; 0 means none) adds a deterministic transverse bump to the initial
    path, and ``path_scale`` reparametrises it as ``t**path_scale``.
    """
    params = fun.params
    N = params.path_nodes
    truncated = params.T is not None
    energy = fun.energy_truncated if truncated else fun.energy
    gradient = fun.residual_truncated if truncated else fun.residual
    e0 = fun.project(np.asarray(e0, dtype=float))
    collapse_norm = COLLAPSE_FRACTION * fun.norm_lambda(e0)
    seed = params.seed if seed is None else seed

    nodes = _initial_path(fun, e0, N, path_scale, seed)
    state = PathState(nodes, np.array([energy(g) for g in nodes]))
    level_history: list = []
    step = 1.0
    rel = np.inf
    it = 0
    k = state.top
    reason = "budget"
    for it in range(1, params.max_outer + 1):
        path, E = state.nodes, state.energies
        k = state.top
        u = path[k]
        if fun.norm_lambda(u) <= collapse_norm:
            return _report(fun, u, COLLAPSED, it, mp_level=float(E[k]), path=state,
                           diagnostics={"phase": "path", "level_history": level_history[-5:]})
        if E[k] <= max(E[0], E[N]):
            reason = "no barrier"
            break

        # locate the path maximum more precisely along the local tangent
        tau = path[k + 1] - path[k - 1]
        tn = fun.precond_norm(tau)
        if tn > 0:
            tau = tau / tn
            lo = -fun.precond_norm(path[k] - path[k - 1])
            hi = fun.precond_norm(path[k + 1] - path[k])
            res = optimize.minimize_scalar(lambda s: -energy(u + s * tau), bounds=(lo, hi),
                                           method="bounded", options={"xatol": 1e-10 * max(hi - lo, 1e-300)})
            if -res.fun > E[k]:
                u = fun.project(u + res.x * tau)
                E[k] = -res.fun
                path[k] = u

        F = gradient(u)
        d = fun.sobolev_gradient(F)
        g2 = float(np.sum(fun.w * F * d))
        rel = np.sqrt(max(g2, 0.0)) / fun.precond_norm(u)
        level_history.append(float(E[k]))
        if rel <= params.mp_tol:
            reason = "converged"
            break

        # descend transversally to the path
        if tn > 0:
            c = fun.inner_lambda(d, tau) + float(np.sum(fun.w * d * tau))
            d = d - c * tau
            g2 = float(np.sum(fun.w * F * d))
        if g2 <= 0:
            d = fun.sobolev_gradient(F)
            g2 = float(np.sum(fun.w * F * d))
        # keep the node within half a spacing of its neighbours
        spacing = min(fun.precond_norm(path[k] - path[k - 1]), fun.precond_norm(path[k + 1] - path[k]))
        dn = fun.precond_norm(d)
        s = min(1.0, 2.0 * step)
        if dn > 0 and spacing > 0:
            s = min(s, 0.5 * spacing / dn)
        while True:
            trial = fun.project(u - s * d)
            Et = energy(trial)
            if Et <= E[k] - 1e-4 * s * g2:
                break
            s *= 0.5
            if s < 1e-14:
                break
        if s < 1e-14:
            reason = "line search stalled"
            break
        state.descents.append((float(E[k]), float(Et)))
        path[k] = trial
        E[k] = Et
        step = s

        if refine:
            new = _reparametrize(fun, path, k)
            En = np.array([energy(g) for g in new])
            if np.max(En[1:N]) <= E[k] + 1e-12 * abs(E[k]):
                state.nodes, state.energies = new, En

    top = state.nodes[k]
    level = float(state.energies[k])
    diag = {"phase": "path", "path_reason": reason, "path_relative_residual": float(rel),
            "level_history": level_history[-5:]}
    if reason != "converged":
        rep = _report(fun, top, EXHAUSTED, it, mp_level=level, path=state, diagnostics=diag)
        if rep.norm_lambda <= collapse_norm:
            rep.outcome = COLLAPSED
        return rep
    rep = newton_refine(fun, top, collapse_norm=collapse_norm)
    if rep.outcome == EXHAUSTED and rep.diagnostics.get("reason") == "newton entry threshold":
        # a critical point of I^T that is not one of I lies in the truncation
        # band; continue on the untruncated equation and let Newton decide
        rep = newton_refine(fun, top, collapse_norm=collapse_norm, entry_threshold=None)
        diag["band_critical_point"] = True
    rep.iterations += it
    rep.mp_level = level
    rep.path = state
    rep.diagnostics.update(diag)
    if rep.converged and rep.within_T is False:
        rep.diagnostics["truncation_violation"] = True
    return rep


# ---------------------------------------------------------------------------
# limit problems


def _limit_params(p: float, mu: float, base: SolverParams | None) -> SolverParams:
    base = base or SolverParams(lam=1.0, mu=mu, p=p)
    return base.with_(lam=1.0, mu=mu, p=p)


def solve_dirichlet_limit(omega, mu: float, p: float, grid: Grid, params: SolverParams | None = None,
                          constants: Constants | None = None) -> SolveReport:
    """``-lap u + mu phi_u u = (u+)^(p-1)`` in the well bottom, ``u = 0`` outside.

    Fields are masked to ``omega``; ``phi_u`` still sees the whole grid.  The
    path phase is truncated with the ``T`` of ``(grid, omega, p)``.
    """
    omega = np.asarray(omega, dtype=bool)
    C = constants or Constants.build(grid, omega, p)
    prm = _limit_params(p, mu, params).with_(T=C.T)
    fun = Functional(grid, None, prm, mask=omega)
    return mountain_pass_solve(fun, C.e0)


def solve_dirichlet_local(omega, p: float, grid: Grid, params: SolverParams | None = None,
                          constants: Constants | None = None) -> SolveReport:
    """``-lap u = (u+)^(p-1)`` in the well bottom with zero Dirichlet data."""
    return solve_dirichlet_limit(omega, 0.0, p, grid, params, constants)


def solve_schrodinger_limit(grid: Grid, V, params: SolverParams, e0, mask=None) -> SolveReport:
    """``-lap u + lam V u = (u+)^(p-1)`` on the whole grid (``mu`` must be 0)."""
    if params.mu != 0:
        raise ValueError("the local limit needs mu = 0")
    return mountain_pass_solve(Functional(grid, V, params, mask=mask), e0)
