"""
Discretisation of R^3 truncated to a ball (radial) or a box (3-D).

Both grids are cell centred finite-volume grids: every node owns one cell,
the quadrature weight of a node is the exact volume of its cell and the
Laplacian is assembled from face fluxes.  Homogeneous Dirichlet data sit on
the outer faces of the domain (half a cell away from the last node).

The same face list produces the Laplacian, the Dirichlet energy and the
sparse stiffness matrix, so that

    -sum(w * u * laplacian(u)) == grad_energy(u)

holds to rounding for every field, masked or not.

Example
-------
>>> g = build_grid("radial", 10.0, 1000)
>>> round(g.h, 12)
0.01
>>> g.integrate(np.ones(g.shape)) / (4 * np.pi * 1000 / 3)
1.0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

RADIAL = "radial"
BOX = "box"

_KIND_ALIASES = {
    "radial": RADIAL,
    "radial1d": RADIAL,
    "box": BOX,
    "box3d": BOX,
}


class GridError(ValueError):
    """Raised for an unusable discretisation or field."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Common face/weight machinery of the two grid kinds.

    Subclasses provide ``shape``, ``weights``, ``radius`` and the face list
    (``_faces``): interior faces as ``(i, j, c)`` with ``c = area / distance``
    and boundary faces as ``(i, c)`` with the half-cell distance already folded
    into ``c``.
    """

    L: float
    n: int

    kind = ""

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise GridError(f"extent must be positive, got L={self.L!r}")
        if int(self.n) != self.n or self.n < 8:
            raise GridError(f"need at least 8 points per axis, got n={self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    # -- geometry -------------------------------------------------------
    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def volume(self) -> float:
        raise NotImplementedError

    def check_field(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise GridError(f"field shape {u.shape} does not match grid {self.shape}")
        if not np.all(np.isfinite(u)):
            raise GridError("field has non-finite values")
        return u

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f))

    def inner(self, f, g) -> float:
        return float(np.sum(self.weights * f * g))

    # -- faces and operators ---------------------------------------------
    def _faces(self):
        raise NotImplementedError

    def _masked_faces(self, mask):
        """Face list with Dirichlet faces wherever ``mask`` switches off."""
        (i, j, c), (ib, cb) = self._faces()
        if mask is None:
            return (i, j, c), (ib, cb)
        m = np.asarray(mask, dtype=bool).ravel()
        both = m[i] & m[j]
        cut_i = m[i] & ~m[j]
        cut_j = ~m[i] & m[j]
        keep_b = m[ib]
        # a face between an active and a frozen node carries u = 0 on the face itself
        bi = np.concatenate([ib[keep_b], i[cut_i], j[cut_j]])
        bc = np.concatenate([cb[keep_b], 2.0 * c[cut_i], 2.0 * c[cut_j]])
        return (i[both], j[both], c[both]), (bi, bc)

    def stiffness(self, mask=None) -> sp.csr_matrix:
        """Symmetric matrix K with u.K.u = int |grad u|^2 (Euclidean form)."""
        key = None if mask is None else np.packbits(np.asarray(mask, bool).ravel()).tobytes()
        cache = self._stiffness_cache
        if key in cache:
            return cache[key]
        (i, j, c), (ib, cb) = self._masked_faces(mask)
        N = self.size
        rows = np.concatenate([i, j, i, j, ib])
        cols = np.concatenate([j, i, i, j, ib])
        vals = np.concatenate([-c, -c, c, c, cb])
        K = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()
        K.sum_duplicates()
        cache[key] = K
        return K

    @cached_property
    def _stiffness_cache(self) -> dict:
        return {}

    def laplacian(self, u, mask=None) -> np.ndarray:
        """Second-order Laplacian with homogeneous Dirichlet data.

        With ``mask`` the nodes outside the mask are treated as frozen at zero
        and the Dirichlet condition is imposed on the faces where the mask ends;
        the returned field is zero off the mask.
        """
        u = np.asarray(u, dtype=float)
        K = self.stiffness(mask)
        out = -(K @ u.ravel()) / self.weights.ravel()
        out = out.reshape(self.shape)
        if mask is not None:
            out = np.where(mask, out, 0.0)
        return out

    def grad_energy(self, u, mask=None) -> float:
        """Discrete ``int |grad u|^2`` from face differences."""
        u = np.asarray(u, dtype=float)
        (i, j, c), (ib, cb) = self._masked_faces(mask)
        flat = u.ravel()
        return float(np.sum(c * (flat[j] - flat[i]) ** 2) + np.sum(cb * flat[ib] ** 2))


@dataclass(frozen=True, eq=False)
class RadialGrid(Grid):
    """Radially symmetric fields on the ball of radius ``L``.

    Nodes are the cell centres ``r_k = (k + 1/2) h`` with ``h = L / n``; the
    weight of node ``k`` is the volume of the shell ``[k h, (k+1) h]``.
    """

    kind = RADIAL

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,)

    @property
    def volume(self) -> float:
        return 4.0 * np.pi * self.L**3 / 3.0

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @property
    def radius(self) -> np.ndarray:
        return self.r

    @cached_property
    def faces(self) -> np.ndarray:
        """Radii of the cell faces, ``0, h, ..., L``."""
        return np.arange(self.n + 1) * self.h

    @cached_property
    def weights(self) -> np.ndarray:
        f = self.faces
        return 4.0 * np.pi / 3.0 * (f[1:] ** 3 - f[:-1] ** 3)

    def _faces(self):
        k = np.arange(self.n - 1)
        c = 4.0 * np.pi * self.faces[1:-1] ** 2 / self.h
        ib = np.array([self.n - 1])
        cb = np.array([4.0 * np.pi * self.L**2 / (0.5 * self.h)])
        return (k, k + 1, c), (ib, cb)


@dataclass(frozen=True, eq=False)
class BoxGrid(Grid):
    """Uniform cell-centred grid on the cube ``[-L, L]^3`` with ``n^3`` nodes."""

    kind = BOX

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n, self.n, self.n)

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    def mesh(self):
        return np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        x2 = self.axis**2
        return np.sqrt(x2[:, None, None] + x2[None, :, None] + x2[None, None, :])

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.shape, self.h**3)

    def _faces(self):
        n, h = self.n, self.h
        idx = np.arange(self.size).reshape(self.shape)
        ii, jj, bb = [], [], []
        for ax in range(3):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(0, n - 1)
            hi[ax] = slice(1, n)
            ii.append(idx[tuple(lo)].ravel())
            jj.append(idx[tuple(hi)].ravel())
            first = [slice(None)] * 3
            last = [slice(None)] * 3
            first[ax] = 0
            last[ax] = n - 1
            bb.append(idx[tuple(first)].ravel())
            bb.append(idx[tuple(last)].ravel())
        i = np.concatenate(ii)
        j = np.concatenate(jj)
        ib = np.concatenate(bb)
        # area h^2 over distance h, boundary distance h/2
        return (i, j, np.full(i.size, h)), (ib, np.full(ib.size, 2.0 * h))


def build_grid(kind: str, L: float, n: int) -> Grid:
    """Build a radial (``"radial"``) or box (``"box"``) grid.

    >>> build_grid("box", 8, 64).h
    0.25
    """
    try:
        k = _KIND_ALIASES[str(kind).lower()]
    except KeyError:
        raise GridError(f"unknown grid kind {kind!r}") from None
    return RadialGrid(L, n) if k == RADIAL else BoxGrid(L, n)


def integrate(grid: Grid, f) -> float:
    return grid.integrate(grid.check_field(f))


def grad_energy_seminorm(grid: Grid, u, mask=None) -> float:
    """``int |grad u|^2`` evaluated with the grid's fixed difference stencil."""
    return grid.grad_energy(grid.check_field(u), mask)


def norm_lambda(grid: Grid, u, V, lam: float, mask=None) -> float:
    """``(int |grad u|^2 + lam V u^2)^(1/2)``."""
    if not lam > 0:
        raise GridError(f"lambda must be positive, got {lam!r}")
    u = grid.check_field(u)
    return float(np.sqrt(grid.grad_energy(u, mask) + lam * grid.integrate(V * u * u)))


def lp_norm(grid: Grid, u, s: float) -> float:
    if not s >= 1:
        raise GridError(f"exponent must be >= 1, got {s!r}")
    u = grid.check_field(u)
    return float(grid.integrate(np.abs(u) ** s) ** (1.0 / s))


def laplacian_apply(grid: Grid, u, mask=None) -> np.ndarray:
    return grid.laplacian(grid.check_field(u), mask)


def cell_average(grid: Grid, func, oversample: int = 8) -> np.ndarray:
    """Average ``func(radius)`` over every cell by midpoint sub-sampling.

    Used to put discontinuous data such as ball indicators on the grid with the
    right mass.  For radial grids sub-cells are weighted by their shell volume.
    """
    m = int(oversample)
    if grid.kind == RADIAL:
        h = grid.h
        sub_faces = np.arange(grid.n * m + 1) * (h / m)
        sub_w = sub_faces[1:] ** 3 - sub_faces[:-1] ** 3
        sub_r = 0.5 * (sub_faces[1:] + sub_faces[:-1])
        vals = np.asarray(func(sub_r), dtype=float) * sub_w
        return vals.reshape(grid.n, m).sum(axis=1) / sub_w.reshape(grid.n, m).sum(axis=1)
    h = grid.h
    offs = (np.arange(m) + 0.5) / m * h - 0.5 * h
    acc = np.zeros(grid.shape)
    ax = grid.axis
    for ox in offs:
        x2 = (ax + ox) ** 2
        for oy in offs:
            y2 = (ax + oy) ** 2
            for oz in offs:
                z2 = (ax + oz) ** 2
                r = np.sqrt(x2[:, None, None] + y2[None, :, None] + z2[None, None, :])
                acc += func(r)
    return acc / m**3


# ---------------------------------------------------------------------------
# potentials

BOUNDED_WELL = "bounded"
UNBOUNDED_WELL = "unbounded"
TABULATED_RADIAL = "tabulated_radial"
TABULATED_3D = "tabulated_3d"


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A nonnegative well potential V with its level parameter ``b``.

    ``table`` holds ``(r, V)`` columns for tabulated radial potentials and a
    ``(L, values)`` pair for tabulated 3-D potentials sampled on a box grid.
    """

    kind: str = BOUNDED_WELL
    b: float = 1.0
    table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in (BOUNDED_WELL, UNBOUNDED_WELL, TABULATED_RADIAL, TABULATED_3D):
            raise GridError(f"unknown potential kind {self.kind!r}")
        if not self.b > 0:
            raise GridError("level parameter b must be positive")
        if self.kind in (TABULATED_RADIAL, TABULATED_3D) and self.table is None:
            raise GridError("tabulated potential needs a table")
        if self.kind == TABULATED_RADIAL:
            r, v = (np.asarray(a, dtype=float) for a in self.table)
            if np.any(v < 0):
                raise GridError("potential must be nonnegative")
            object.__setattr__(self, "table", (r, v))
        if self.kind == TABULATED_3D:
            L, v = self.table
            v = np.asarray(v, dtype=float)
            if v.ndim != 3 or len(set(v.shape)) != 1:
                raise GridError("3-D table must be a cube of samples")
            if np.any(v < 0):
                raise GridError("potential must be nonnegative")
            object.__setattr__(self, "table", (float(L), v))

    def __call__(self, position) -> np.ndarray:
        return eval_potential(self, position)

    def sample(self, grid: Grid) -> np.ndarray:
        """Values of V at the grid nodes."""
        if self.kind == TABULATED_3D:
            L, v = self.table
            if grid.kind != BOX or grid.n != v.shape[0] or not np.isclose(grid.L, L):
                raise GridError("3-D table does not match the grid")
            return v.copy()
        return np.asarray(eval_potential(self, grid.radius), dtype=float)

    def omega(self, grid: Grid) -> np.ndarray:
        """Nodes of the well bottom, decided by V(node) == 0 exactly."""
        return self.sample(grid) == 0.0


def _as_radius(position) -> np.ndarray:
    x = np.asarray(position, dtype=float)
    if x.ndim >= 1 and x.shape[-1] == 3:
        return np.linalg.norm(x, axis=-1)
    return np.abs(x)


def eval_potential(spec: PotentialSpec, position):
    """V at a radius, an array of radii, or points with a trailing axis of 3.

    >>> eval_potential(PotentialSpec(BOUNDED_WELL), 1.5)
    0.25
    """
    if spec.kind == TABULATED_3D:
        L, v = spec.table
        n = v.shape[0]
        x = np.atleast_2d(np.asarray(position, dtype=float))
        h = 2.0 * L / n
        idx = np.clip(np.floor((x + L) / h).astype(int), 0, n - 1)
        out = v[idx[:, 0], idx[:, 1], idx[:, 2]]
        return out if np.ndim(position) > 1 else float(out[0])
    r = _as_radius(position)
    if spec.kind == BOUNDED_WELL:
        s = r - 1.0
        out = np.where(r <= 1.0, 0.0, np.where(r <= 2.0, s * s, 1.0))
    elif spec.kind == UNBOUNDED_WELL:
        s = r - 1.0
        out = np.where(r <= 1.0, 0.0, s * s)
    else:
        rt, vt = spec.table
        out = np.interp(r, rt, vt)
    return float(out) if np.ndim(out) == 0 else out


def vb_measure(spec: PotentialSpec, b: float | None = None, grid: Grid | None = None) -> float:
    """Lebesgue measure of ``{V < b}``; ``inf`` when the set is unbounded.

    Catalog potentials are handled analytically; tabulated ones by quadrature
    on ``grid`` (which must cover the tabulated region).
    """
    b = spec.b if b is None else float(b)
    if not b > 0:
        raise GridError("b must be positive")
    if spec.kind in (BOUNDED_WELL, UNBOUNDED_WELL):
        if spec.kind == BOUNDED_WELL and b > 1.0:
            return float("inf")
        R = 1.0 + np.sqrt(b)
        return 4.0 * np.pi * R**3 / 3.0
    if grid is None:
        raise GridError("tabulated potentials need a grid for the level-set measure")
    V = spec.sample(grid)
    return grid.integrate((V < b).astype(float))


def load_radial_table(path, b: float = 1.0) -> PotentialSpec:
    """Two whitespace separated columns ``r V(r)``; ``#`` starts a comment."""
    data = np.loadtxt(Path(path), dtype=float, ndmin=2)
    if data.shape[1] != 2:
        raise GridError("radial table needs exactly two columns")
    order = np.argsort(data[:, 0])
    return PotentialSpec(TABULATED_RADIAL, b, (data[order, 0], data[order, 1]))


def load_box_table(path, L: float, n: int, b: float = 1.0) -> PotentialSpec:
    """Flat little-endian float64 file with ``n^3`` values in row-major order."""
    v = np.fromfile(Path(path), dtype="<f8")
    if v.size != n**3:
        raise GridError(f"expected {n**3} values, found {v.size}")
    return PotentialSpec(TABULATED_3D, b, (L, v.reshape(n, n, n)))


def save_box_table(path, values) -> None:
    np.ascontiguousarray(values, dtype="<f8").tofile(Path(path))
