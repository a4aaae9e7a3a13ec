import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spwell.grid import (BOUNDED_WELL, UNBOUNDED_WELL, TABULATED_3D, GridError, PotentialSpec, build_grid,
                         eval_potential, grad_energy_seminorm, integrate, laplacian_apply, load_box_table,
                         load_radial_table, lp_norm, norm_lambda, save_box_table, vb_measure)

PI32 = math.pi**1.5


def test_build_grid_spacing():
    g = build_grid("radial", 10, 1000)
    assert g.h == pytest.approx(0.01, rel=1e-14)
    assert g.r[0] == pytest.approx(0.005)
    b = build_grid("box", 8, 64)
    assert b.h == 0.25 and b.shape == (64, 64, 64)


@pytest.mark.parametrize("kind,L,n", [("box", 8, 4), ("radial", 1, 7), ("radial", 0, 10), ("radial", -1, 10),
                                      ("sphere", 1, 10)])
def test_build_grid_rejects(kind, L, n):
    with pytest.raises(GridError):
        build_grid(kind, L, n)


@pytest.mark.parametrize("kind,L,n,vol", [("radial", 2.0, 100, 4 * math.pi * 8 / 3), ("radial", 7.0, 333, None),
                                          ("box", 3.0, 16, 216.0)])
def test_weights_sum_to_domain_measure(kind, L, n, vol):
    g = build_grid(kind, L, n)
    vol = g.volume if vol is None else vol
    assert np.all(g.weights > 0)
    assert abs(integrate(g, np.ones(g.shape)) / vol - 1) <= 1e-12


def test_integrate_examples():
    g = build_grid("radial", 2, 500)
    assert integrate(g, np.ones(g.shape)) == pytest.approx(4 * math.pi * 8 / 3, rel=1e-10)
    assert integrate(g, np.zeros(g.shape)) == 0.0
    g = build_grid("radial", 10, 10_000)
    assert integrate(g, np.exp(-g.r**2)) == pytest.approx(PI32, rel=1e-6)


def test_grad_energy_gaussian_and_constant():
    g = build_grid("radial", 10, 2000)
    assert grad_energy_seminorm(g, np.exp(-g.r**2 / 2)) == pytest.approx(1.5 * PI32, rel=1e-4)
    # constants have no interior gradient; the only contribution is the Dirichlet face
    b = build_grid("box", 2, 8)
    c = np.full(b.shape, 3.0)
    (i, j, cc), (ib, cb) = b._faces()
    assert grad_energy_seminorm(b, c) == pytest.approx(np.sum(cb) * 9.0)


def test_grad_energy_spike_matches_stencil():
    g = build_grid("radial", 1.0, 100)
    k = 40
    u = np.zeros(g.shape)
    u[k] = 1.0
    hand = 4 * math.pi * ((k * g.h) ** 2 + ((k + 1) * g.h) ** 2) / g.h
    assert grad_energy_seminorm(g, u) == pytest.approx(hand, rel=1e-14)


def test_norm_lambda_examples():
    g = build_grid("radial", 10, 2000)
    u = np.exp(-g.r**2 / 2)
    assert norm_lambda(g, u, g.r**2, 1.0) == pytest.approx(math.sqrt(3 * PI32), rel=1e-3)
    assert norm_lambda(g, u, np.zeros(g.shape), 17.0) == pytest.approx(math.sqrt(grad_energy_seminorm(g, u)))
    assert norm_lambda(g, np.zeros(g.shape), g.r**2, 3.0) == 0.0
    with pytest.raises(GridError):
        norm_lambda(g, u, g.r**2, 0.0)


def test_lp_norm_examples():
    g = build_grid("radial", 1, 100)
    assert lp_norm(g, np.ones(g.shape), 2) == pytest.approx(math.sqrt(4 * math.pi / 3), rel=1e-12)
    g = build_grid("radial", 10, 4000)
    assert lp_norm(g, np.exp(-g.r**2 / 2), 6) == pytest.approx((math.pi / 3) ** 0.25, rel=1e-4)
    with pytest.raises(GridError):
        lp_norm(g, np.ones(g.shape), 0.5)


@given(c=st.floats(-50, 50).filter(lambda c: c == 0 or abs(c) > 1e-30), s=st.floats(1, 8))
def test_lp_norm_homogeneous(c, s):
    g = build_grid("radial", 3, 64)
    u = np.exp(-g.r)
    assert lp_norm(g, c * u, s) == pytest.approx(abs(c) * lp_norm(g, u, s), rel=1e-12, abs=1e-300)


def test_laplacian_of_r_squared_is_six():
    g = build_grid("radial", 5, 500)
    lap = laplacian_apply(g, g.r**2)
    assert np.max(np.abs(lap[:-1] - 6.0)) <= 1e-8


def test_laplacian_constant_interior_zero():
    g = build_grid("box", 1, 12)
    lap = laplacian_apply(g, np.full(g.shape, 2.0))
    assert np.max(np.abs(lap[1:-1, 1:-1, 1:-1])) <= 1e-12 * 2.0 / g.h**2


def test_box_eigenfunction():
    g = build_grid("box", 1.5, 24)
    n, h = g.n, g.h
    k = (1, 2, 3)
    i = np.arange(n) + 0.5
    modes = [np.sin(kk * math.pi * i / n) for kk in k]
    u = modes[0][:, None, None] * modes[1][None, :, None] * modes[2][None, None, :]
    lam = sum((2 - 2 * math.cos(kk * math.pi / n)) / h**2 for kk in k)
    assert np.max(np.abs(-laplacian_apply(g, u) - lam * u)) <= 1e-12 * lam


@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(["radial", "box"]))
def test_laplacian_symmetric(seed, kind):
    rng = np.random.default_rng(seed)
    g = build_grid(kind, 2.0, 40 if kind == "radial" else 10)
    u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    a = g.inner(laplacian_apply(g, u), v)
    b = g.inner(u, laplacian_apply(g, v))
    assert abs(a - b) <= 1e-10 * (abs(a) + abs(b) + 1)
    # summation by parts against the energy
    assert -g.inner(laplacian_apply(g, u), u) == pytest.approx(grad_energy_seminorm(g, u), rel=1e-10)


@given(seed=st.integers(0, 2**32 - 1), l1=st.floats(0.01, 100), l2=st.floats(0.01, 100))
def test_norm_lambda_monotone(seed, l1, l2):
    rng = np.random.default_rng(seed)
    g = build_grid("radial", 4, 50)
    u = rng.standard_normal(g.shape)
    V = PotentialSpec(BOUNDED_WELL).sample(g)
    lo, hi = sorted((l1, l2))
    assert norm_lambda(g, u, V, lo) <= norm_lambda(g, u, V, hi) * (1 + 1e-14)
    assert grad_energy_seminorm(g, u) >= 0
    # ||u||_{H1}-type bound: with V >= 1 off the well this only needs lam >= 1
    h1 = math.sqrt(grad_energy_seminorm(g, u))
    assert h1 <= norm_lambda(g, u, V, max(hi, 1.0)) * (1 + 1e-14)


@given(seed=st.integers(0, 2**32 - 1))
def test_grad_energy_zero_only_for_zero(seed):
    # with Dirichlet faces the only field of zero energy is 0
    rng = np.random.default_rng(seed)
    g = build_grid("radial", 1, 16)
    u = rng.standard_normal(g.shape)
    assert grad_energy_seminorm(g, u) > 0
    assert grad_energy_seminorm(g, 0 * u) == 0


def test_potential_catalog():
    b = PotentialSpec(BOUNDED_WELL)
    assert eval_potential(b, 1.5) == 0.25
    assert eval_potential(b, 3.0) == 1.0
    assert eval_potential(b, np.array([0.3, 0.0, 0.4])) == 0.0
    assert eval_potential(PotentialSpec(UNBOUNDED_WELL), 4.0) == 9.0


def test_omega_is_unit_ball():
    g = build_grid("radial", 3, 300)
    om = PotentialSpec(BOUNDED_WELL).omega(g)
    assert np.array_equal(om, g.r <= 1.0)


def test_vb_measure():
    assert vb_measure(PotentialSpec(BOUNDED_WELL), 1.0) == pytest.approx(32 * math.pi / 3)
    assert vb_measure(PotentialSpec(UNBOUNDED_WELL), 0.25) == pytest.approx(4 * math.pi * 1.5**3 / 3)
    assert vb_measure(PotentialSpec(UNBOUNDED_WELL), 0.04) == pytest.approx(7.2382, abs=1e-4)
    with pytest.raises(GridError):
        vb_measure(PotentialSpec(BOUNDED_WELL), 0.0)


def test_field_validation():
    g = build_grid("radial", 1, 10)
    with pytest.raises(GridError):
        integrate(g, np.ones(11))
    with pytest.raises(GridError):
        integrate(g, np.full(10, np.nan))
    with pytest.raises(GridError):
        PotentialSpec(BOUNDED_WELL, b=-1)


def test_tabulated_tables(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("# r V\n0 0\n1 0\n2 1\n10 1\n")
    spec = load_radial_table(path)
    g = build_grid("radial", 4, 40)
    V = spec.sample(g)
    assert np.all(V >= 0) and V[0] == 0 and V[-1] == 1
    assert spec.omega(g).sum() == np.sum(g.r <= 1)

    b = build_grid("box", 2, 8)
    vals = np.where(b.radius < 1, 0.0, 1.0)
    save_box_table(tmp_path / "v.bin", vals)
    assert (tmp_path / "v.bin").stat().st_size == 8 * 8**3
    spec3 = load_box_table(tmp_path / "v.bin", 2, 8)
    assert spec3.kind == TABULATED_3D
    assert np.array_equal(spec3.sample(b), vals)
    with pytest.raises(GridError):
        load_box_table(tmp_path / "v.bin", 2, 9)
