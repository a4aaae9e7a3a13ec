"""
Energy functional of the Schroedinger-Poisson problem with a steep well,

    I(u) = 1/2 ||u||_lam^2 + mu/4 Q(u) - 1/p int (u+)^p,

its truncated variant I^T (nonlocal term multiplied by eta(||u||_lam^2 / T^2)),
first variations, the preconditioned (Sobolev) gradient and the mountain-pass
constants built from a fixed bump ``e0`` supported in the well bottom.

All discrete quantities are exact derivatives of the discrete energies: the
strong-form residual ``F(u)`` satisfies ``<I'(u), v> = sum(w * F(u) * v)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage, optimize

from .grid import RADIAL, Grid, GridError
from .poisson import convolve

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a linear or nonlinear iteration fails its contract."""


# ---------------------------------------------------------------------------
# cut-off


def eta(t):
    """C^1 cut-off: 1 on [0, 1], cubic Hermite blend on (1, 2), 0 beyond 2.

    >>> eta(1.5), eta_prime(1.5)
    (0.5, -1.5)
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("eta is defined for t >= 0")
    s = np.clip(t_arr - 1.0, 0.0, 1.0)
    out = 1.0 - 3.0 * s * s + 2.0 * s**3
    return float(out) if out.ndim == 0 else out


def eta_prime(t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("eta is defined for t >= 0")
    s = np.clip(t_arr - 1.0, 0.0, 1.0)
    out = -6.0 * s + 6.0 * s * s
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SolverParams:
    """Physical parameters ``(lam, mu, p)``, truncation radius and controls.

    ``T=None`` means the untruncated functional.  Tolerances: ``tol`` bounds
    the max-norm of the Euler-Lagrange residual at convergence, ``mp_tol`` is
    the relative dual-norm residual at which the path phase hands over to
    Newton.
    """

    lam: float
    mu: float
    p: float
    T: float | None = None
    tol: float = 1e-8
    mp_tol: float = 1e-2
    path_nodes: int = 32
    max_outer: int = 4000
    newton_max: int = 40
    cg_tol: float = 1e-10
    cg_maxiter: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not 2.0 < self.p < 6.0:
            raise ValueError(f"p must lie in (2, 6), got {self.p}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.mu >= 0:
            raise ValueError("mu must be nonnegative")
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be positive when given")
        if self.path_nodes < 2:
            raise ValueError("a path needs at least 2 segments")

    def with_(self, **kw) -> "SolverParams":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# the functional


class Functional:
    """Discrete energy for one ``(grid, V, params)`` and optional Dirichlet mask.

    With ``mask`` the unknowns are restricted to the masked nodes (zero
    continuation outside); the Newton potential is still taken over the whole
    grid.  Limit problems without a potential pass ``V=None``.
    """

    def __init__(self, grid: Grid, V, params: SolverParams, mask=None):
        self.grid = grid
        self.params = params
        self.V = np.zeros(grid.shape) if V is None else grid.check_field(V)
        if np.any(self.V < 0):
            raise GridError("potential must be nonnegative")
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        if self.mask is not None and not self.mask.any():
            raise GridError("empty mask")
        self.w = grid.weights
        self.K = grid.stiffness(self.mask)
        self._factor = None

    # -- helpers ---------------------------------------------------------
    def with_params(self, **kw) -> "Functional":
        out = Functional.__new__(Functional)
        out.__dict__.update(self.__dict__)
        out.params = self.params.with_(**kw)
        out._factor = None
        return out

    def project(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return u if self.mask is None else np.where(self.mask, u, 0.0)

    def _Ku(self, u) -> np.ndarray:
        return (self.K @ u.ravel()).reshape(self.grid.shape)

    def a_apply(self, u) -> np.ndarray:
        """Strong form of ``<u, .>_lam``: ``-laplace(u) + lam V u``."""
        out = self._Ku(u) / self.w + self.params.lam * self.V * u
        return self.project(out)

    def inner_lambda(self, u, v) -> float:
        return float(np.vdot(u.ravel(), self.K @ v.ravel()) + self.params.lam * np.sum(self.w * self.V * u * v))

    def norm2_lambda(self, u) -> float:
        return self.inner_lambda(u, u)

    def norm_lambda(self, u) -> float:
        return float(np.sqrt(max(self.norm2_lambda(u), 0.0)))

    def phi(self, u) -> np.ndarray:
        return convolve(self.grid, u * u)

    def nonlocal_energy(self, u) -> float:
        return float(np.sum(self.w * self.phi(u) * u * u))

    def power_term(self, u) -> float:
        """``int (u+)^p``."""
        return float(np.sum(self.w * np.maximum(u, 0.0) ** self.params.p))

    # -- energies ----------------------------------------------------------
    def _pieces(self, u):
        N2 = self.norm2_lambda(u)
        Q = self.nonlocal_energy(u) if self.params.mu != 0 else 0.0
        P = self.power_term(u)
        return N2, Q, P

    def energy(self, u) -> float:
        p, mu = self.params.p, self.params.mu
        N2, Q, P = self._pieces(self.project(u))
        return 0.5 * N2 + 0.25 * mu * Q - P / p

    def energy_truncated(self, u) -> float:
        T = self._require_T()
        p, mu = self.params.p, self.params.mu
        N2, Q, P = self._pieces(self.project(u))
        return 0.5 * N2 + 0.25 * mu * eta(N2 / T**2) * Q - P / p

    def _require_T(self) -> float:
        if self.params.T is None:
            raise ValueError("truncated functional needs params.T")
        return self.params.T

    # -- derivatives -----------------------------------------------------------
    def residual(self, u) -> np.ndarray:
        """``F(u) = -laplace(u) + lam V u + mu phi_u u - (u+)^(p-1)``."""
        u = self.project(u)
        p, mu = self.params.p, self.params.mu
        out = self.a_apply(u) - np.maximum(u, 0.0) ** (p - 1.0)
        if mu != 0:
            out = out + mu * self.phi(u) * u
        return self.project(out)

    euler_lagrange_residual = residual

    def residual_truncated(self, u) -> np.ndarray:
        """Strong form of ``(I^T)'(u)``."""
        T = self._require_T()
        u = self.project(u)
        p, mu = self.params.p, self.params.mu
        up = np.maximum(u, 0.0) ** (p - 1.0)
        if mu == 0:
            return self.project(self.a_apply(u) - up)
        t = self.norm2_lambda(u) / T**2
        if t <= 1.0:
            return self.residual(u)
        phi = self.phi(u)
        Q = float(np.sum(self.w * phi * u * u))
        scale = 1.0 + mu / (2.0 * T**2) * eta_prime(t) * Q
        return self.project(scale * self.a_apply(u) + mu * eta(t) * phi * u - up)

    def _variation_pieces(self, u, v):
        p = self.params.p
        uv = self.inner_lambda(u, v)
        up = float(np.sum(self.w * np.maximum(u, 0.0) ** (p - 1.0) * v))
        return uv, up

    def first_variation(self, u, v) -> float:
        """``<I'(u), v>``."""
        u, v = self.project(u), self.project(v)
        mu = self.params.mu
        uv, up = self._variation_pieces(u, v)
        nl = float(np.sum(self.w * self.phi(u) * u * v)) if mu != 0 else 0.0
        return uv + mu * nl - up

    def first_variation_truncated(self, u, v) -> float:
        """``<(I^T)'(u), v>`` including the term carried by ``eta'``."""
        T = self._require_T()
        u, v = self.project(u), self.project(v)
        mu = self.params.mu
        uv, up = self._variation_pieces(u, v)
        if mu == 0:
            return uv - up
        phi = self.phi(u)
        nl = float(np.sum(self.w * phi * u * v))
        t = self.norm2_lambda(u) / T**2
        e, de = eta(t), eta_prime(t)
        extra = 0.0
        if de != 0.0:
            Q = float(np.sum(self.w * phi * u * u))
            extra = mu / (2.0 * T**2) * de * uv * Q
        return uv + mu * e * nl + extra - up

    def jacobian_apply(self, u, v) -> np.ndarray:
        """``F'(u) v`` for the untruncated residual."""
        u, v = self.project(u), self.project(v)
        p, mu = self.params.p, self.params.mu
        out = self.a_apply(v) - (p - 1.0) * np.maximum(u, 0.0) ** (p - 2.0) * v
        if mu != 0:
            out = out + mu * self.phi(u) * v + 2.0 * mu * convolve(self.grid, u * v) * u
        return self.project(out)

    # -- preconditioner ------------------------------------------------------------
    def precond_matrix(self) -> sp.csr_matrix:
        """Euclidean-symmetric form ``K + W (lam V + 1)`` (identity off the mask)."""
        d = (self.w * (self.params.lam * self.V + 1.0)).ravel()
        A = self.K + sp.diags(d)
        if self.mask is not None:
            off = ~self.mask.ravel()
            keep = sp.diags((~off).astype(float))
            A = keep @ A @ keep + sp.diags(off.astype(float))
        return A.tocsc()

    def sobolev_gradient(self, F) -> np.ndarray:
        """Solve ``(-laplace + lam V + 1) z = F`` for the descent representative."""
        F = self.project(np.asarray(F, dtype=float))
        if not np.any(F):
            return np.zeros(self.grid.shape)
        rhs = (self.w * F).ravel()
        if self.grid.kind == RADIAL:
            # 1-D operator: exact sparse factorisation instead of a Krylov loop
            if self._factor is None:
                self._factor = spla.splu(self.precond_matrix())
            z = self._factor.solve(rhs)
        else:
            A = self.precond_matrix()
            Minv = sp.diags(1.0 / A.diagonal())
            z, info = spla.cg(A, rhs, rtol=self.params.cg_tol, maxiter=self.params.cg_maxiter, M=Minv)
            if info != 0:
                raise SolverError(f"CG did not converge (info={info})")
        return self.project(z.reshape(self.grid.shape))

    def precond_norm(self, z) -> float:
        """``||z||`` in the preconditioner's energy norm."""
        return float(np.sqrt(self.norm2_lambda(z) + np.sum(self.w * z * z)))


# ---------------------------------------------------------------------------
# constants


def _inscribed_ball(grid: Grid, omega):
    """Centre and radius of a ball of active cells inside ``omega``."""
    omega = np.asarray(omega, dtype=bool)
    if grid.kind == RADIAL:
        if not omega[0]:
            raise GridError("radial well bottom must contain the origin")
        k = int(np.argmin(omega)) if not omega.all() else grid.n
        return 0.0, k * grid.h
    # the box faces are Dirichlet, so cells beyond them count as outside
    dist = ndimage.distance_transform_edt(np.pad(omega, 1))[1:-1, 1:-1, 1:-1] * grid.h
    idx = np.unravel_index(int(np.argmax(dist)), dist.shape)
    centre = np.array([grid.axis[i] for i in idx])
    # distance transform counts to the nearest outside node; the face is h/2 closer
    return centre, float(dist[idx]) - 0.5 * grid.h


def _bump_profile(grid: Grid, omega) -> np.ndarray:
    centre, r0 = _inscribed_ball(grid, omega)
    if r0 < 4.0 * grid.h:
        raise GridError(f"well bottom too small for a bump (inscribed radius {r0:.3g} < 4h)")
    if grid.kind == RADIAL:
        rr = grid.r
    else:
        X, Y, Z = grid.mesh()
        rr = np.sqrt((X - centre[0]) ** 2 + (Y - centre[1]) ** 2 + (Z - centre[2]) ** 2)
    s = np.clip(1.0 - rr**2 / r0**2, 0.0, None)
    return np.where(omega, s * s, 0.0)


def j_energy(grid: Grid, e, p: float) -> float:
    """``1/2 int |grad e|^2 - 1/p int (e+)^p`` (the V-term vanishes on the well)."""
    return 0.5 * grid.grad_energy(e) - float(np.sum(grid.weights * np.maximum(e, 0.0) ** p)) / p


def make_e0(grid: Grid, omega, p: float) -> np.ndarray:
    """Fixed bump in the well bottom scaled by the least power of two giving J <= -1."""
    if not 2.0 < p:
        raise ValueError("p must exceed 2")
    bump = _bump_profile(grid, omega)
    for k in range(0, 200):
        e0 = bump * 2.0**k
        if j_energy(grid, e0, p) <= -1.0:
            return e0
    raise SolverError("no power-of-two scaling of the bump reaches J <= -1")


def compute_mu_star(grid: Grid, e0) -> float:
    """``4 / Q(e0)``: below it the truncated energy of ``e0`` stays negative."""
    from .poisson import nonlocal_energy

    Q = nonlocal_energy(grid, e0)
    if Q <= 0:
        raise SolverError("Q(e0) vanishes")
    return 4.0 / Q


def _ray_profile(grid: Grid, e0, mu_star: float, p: float):
    from .poisson import nonlocal_energy

    g2 = grid.grad_energy(e0)
    Q = nonlocal_energy(grid, e0)
    Pp = float(np.sum(grid.weights * np.maximum(e0, 0.0) ** p))
    return lambda t: 0.5 * t**2 * g2 + 0.25 * mu_star * t**4 * Q - t**p * Pp / p


def compute_M(grid: Grid, e0, mu_star: float, p: float, samples: int = 10_000) -> float:
    """Maximum over ``t in [0, 1]`` of the upper profile of the energy on the ray ``t e0``."""
    f = _ray_profile(grid, e0, mu_star, p)
    t = np.linspace(0.0, 1.0, samples)
    vals = f(t)
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, samples - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda s: -f(s), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-14})
        best = max(best, float(-res.fun))
    return max(best, 0.0)


def compute_T(p: float, M: float) -> float:
    """Truncation radius ``sqrt(2 p (M + 1) / (p - 2))``.

    >>> round(compute_T(3.0, 1.0) ** 2, 12)
    12.0
    """
    if not p > 2:
        raise ValueError("p must exceed 2")
    if M < 0:
        raise ValueError("M must be nonnegative")
    return float(np.sqrt(2.0 * p * (M + 1.0) / (p - 2.0)))


@dataclass(frozen=True)
class Constants:
    """Mountain-pass constants for one ``(grid, well, p)``.

    ``d_s`` holds empirical embedding ratios and is reporting-only.
    """

    e0: np.ndarray = field(repr=False)
    mu_star: float
    M: float
    T: float
    S: float
    theta: float
    d_s: dict = field(default_factory=dict)

    @classmethod
    def build(cls, grid: Grid, omega, p: float, V=None, d_s: dict | None = None) -> "Constants":
        from .analysis import empirical_embedding_constants, sobolev_S

        e0 = make_e0(grid, omega, p)
        mu_star = compute_mu_star(grid, e0)
        M = compute_M(grid, e0, mu_star, p)
        T = compute_T(p, M)
        if d_s is None and V is not None:
            d_s = empirical_embedding_constants(grid, V, (p, 12.0 / 5.0, 6.0))
        return cls(e0, mu_star, M, T, sobolev_S(), (6.0 - p) / (2.0 * p), d_s or {})
