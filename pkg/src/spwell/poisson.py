"""
Newton potential phi = Phi * rho, Phi(x) = 1 / (4 pi |x|), and the nonlocal
energy Q(u) = int phi_u u^2.

Radial grids use the exact shell-averaged Green's function: for densities that
are constant on every cell the discrete quadratic form

    Q_h(rho) = sum_jk w_j w_k rho_j rho_k G_jk

is the exact Coulomb self-energy, and ``G`` is symmetric by construction.
Box grids convolve with the sampled kernel on a grid zero padded to ``2n`` per
axis (no periodic images); the origin sample is the average of the kernel over
a ball of volume ``h^3``.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .grid import BOX, RADIAL, Grid, GridError

_FOUR_PI = 4.0 * np.pi

# box-grid kernel transforms, keyed by (L, n, origin value)
_KERNEL_CACHE: dict = {}


def origin_regularization(h: float) -> float:
    """Average of 1/(4 pi |x|) over the ball of volume ``h**3``."""
    a = h * (3.0 / _FOUR_PI) ** (1.0 / 3.0)
    return 3.0 / (8.0 * np.pi * a)


def _check_density(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -1e-12):
        raise GridError("density has negative values")
    return rho


# -- radial -------------------------------------------------------------------


def _radial_self(grid) -> np.ndarray:
    a = grid.faces[:-1]
    b = grid.faces[1:]
    w = grid.weights
    return 8.0 * np.pi / (3.0 * w * w) * ((b**5 - a**5) / 5.0 - a**3 * (b * b - a * a) / 2.0)


def _radial_apply(grid, rho) -> np.ndarray:
    h, r, w = grid.h, grid.r, grid.weights
    wr = w * rho
    inner = np.concatenate(([0.0], np.cumsum(wr)[:-1]))
    outer_terms = r * rho
    outer = np.cumsum(outer_terms[::-1])[::-1] - outer_terms
    return (h * r / w) * inner + _radial_self(grid) * wr + h * outer


def radial_potential_at(grid, rho, radii) -> np.ndarray:
    """Exact potential of the cellwise constant density ``rho`` at ``radii``.

    ``phi(r) = (1/r) int_0^r rho s^2 ds + int_r^L rho s ds``; the density is
    taken as zero beyond ``L``.
    """
    rho = _check_density(rho)
    r = np.atleast_1d(np.asarray(radii, dtype=float))
    f = grid.faces
    # cumulative int_0^{f_k} rho s^2 ds and int_0^{f_k} rho s ds at the faces
    m2 = np.concatenate(([0.0], np.cumsum(rho * (f[1:] ** 3 - f[:-1] ** 3) / 3.0)))
    m1 = np.concatenate(([0.0], np.cumsum(rho * (f[1:] ** 2 - f[:-1] ** 2) / 2.0)))
    rc = np.clip(r, 0.0, grid.L)
    k = np.minimum((rc / grid.h).astype(int), grid.n - 1)
    in2 = m2[k] + rho[k] * (rc**3 - f[k] ** 3) / 3.0
    in1 = m1[k] + rho[k] * (rc**2 - f[k] ** 2) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        near = np.where(rc > 0, in2 / np.where(rc > 0, rc, 1.0), 0.0)
    far = m1[-1] - in1
    out = np.where(r > grid.L, m2[-1] / np.where(r > 0, r, 1.0), near + far)
    return out if np.ndim(radii) else float(out[0])


# -- box ------------------------------------------------------------------------


def kernel_transform(grid, origin_value: float | None = None) -> np.ndarray:
    """Real FFT of the zero-padded kernel for ``grid`` (cached, read-only)."""
    c0 = origin_regularization(grid.h) if origin_value is None else float(origin_value)
    key = (grid.L, grid.n, c0)
    hit = _KERNEL_CACHE.get(key)
    if hit is not None:
        return hit
    n, h = grid.n, grid.h
    m = np.arange(2 * n)
    d = np.where(m < n, m, m - 2 * n) * h
    d2 = d**2
    dist = np.sqrt(d2[:, None, None] + d2[None, :, None] + d2[None, None, :])
    with np.errstate(divide="ignore"):
        K = 1.0 / (_FOUR_PI * dist)
    K[0, 0, 0] = c0
    Kh = scipy.fft.rfftn(K * h**3)
    Kh.setflags(write=False)
    _KERNEL_CACHE[key] = Kh
    return Kh


def _box_apply(grid, rho, origin_value=None) -> np.ndarray:
    n = grid.n
    Kh = kernel_transform(grid, origin_value)
    rh = scipy.fft.rfftn(rho, s=(2 * n,) * 3)
    return scipy.fft.irfftn(rh * Kh, s=(2 * n,) * 3)[:n, :n, :n]


def box_potential_at(grid, rho, points) -> np.ndarray:
    """Direct-sum potential of the nodal density at arbitrary points."""
    rho = _check_density(rho)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h = grid.h
    a = h * (3.0 / _FOUR_PI) ** (1.0 / 3.0)
    X, Y, Z = grid.mesh()
    sel = rho != 0
    xs, ys, zs, q = X[sel], Y[sel], Z[sel], rho[sel] * h**3
    out = np.empty(len(pts))
    for k, (x, y, z) in enumerate(pts):
        d = np.sqrt((xs - x) ** 2 + (ys - y) ** 2 + (zs - z) ** 2)
        # ball-averaged kernel inside the regularisation radius
        ker = np.where(d >= a, 1.0 / (_FOUR_PI * np.maximum(d, a)), (3 * a * a - d * d) / (8 * np.pi * a**3))
        out[k] = np.dot(q, ker)
    return out if np.ndim(points) > 1 else float(out[0])


# -- public API -------------------------------------------------------------------


def newton_potential(grid: Grid, rho, *, origin_value: float | None = None) -> np.ndarray:
    """Potential ``phi`` with ``-laplace(phi) = rho`` and ``phi -> 0`` at infinity.

    Radial grids return cell averages of the exact potential of the cellwise
    constant density; box grids return the discrete free-space convolution at
    the nodes.  ``origin_value`` overrides the box kernel's origin sample.
    """
    rho = _check_density(grid.check_field(rho))
    if grid.kind == RADIAL:
        return _radial_apply(grid, rho)
    if grid.kind == BOX:
        return _box_apply(grid, rho, origin_value)
    raise GridError(f"unsupported grid {grid!r}")


def potential_at(grid: Grid, rho, points):
    """Pointwise potential: radii for radial grids, 3-vectors for box grids."""
    if grid.kind == RADIAL:
        return radial_potential_at(grid, rho, points)
    return box_potential_at(grid, rho, points)


def convolve(grid: Grid, f) -> np.ndarray:
    """``Phi * f`` for a density of either sign (no positivity check)."""
    f = np.asarray(f, dtype=float)
    if grid.kind == RADIAL:
        return _radial_apply(grid, f)
    return _box_apply(grid, f)


def bilinear_newton(grid: Grid, f, g) -> float:
    """``B(f, g) = int (Phi * f) g``; symmetric in ``f`` and ``g``."""
    f = grid.check_field(f)
    g = grid.check_field(g)
    return grid.inner(convolve(grid, f), g)


def nonlocal_energy(grid: Grid, u) -> float:
    """``Q(u) = int phi_u u^2`` with ``phi_u = Phi * u^2``."""
    rho = np.square(grid.check_field(u))
    return bilinear_newton(grid, rho, rho)
