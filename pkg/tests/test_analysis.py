import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spwell import oracles
from spwell.analysis import (BOTH, bubble_rayleigh_quotient, convergence_study, cross_term_inequality_check,
                             fit_decay, h1_distance, h_function, localization_mass, moser_linf_bound,
                             nehari_defect, nonexistence_threshold, radial_profile, random_field_corpus,
                             rayleigh_quotient, sobolev_S, strictly_decreasing)
from spwell.functional import Functional, SolverParams
from spwell.grid import build_grid
from spwell.poisson import newton_potential, nonlocal_energy

# -- Sobolev constant ------------------------------------------------------------


def test_sobolev_S_matches_talenti_and_bubble():
    S = sobolev_S()
    assert S == pytest.approx(oracles.talenti_constant(), rel=1e-14)
    assert S == pytest.approx(5.478, abs=1e-3)
    assert S**1.5 == pytest.approx(12.82, abs=1e-2)
    assert S**1.5 > 4 * math.pi / 3
    assert bubble_rayleigh_quotient() == pytest.approx(S, rel=1e-2)


def test_rayleigh_quotient_one_sided():
    g = build_grid("radial", 8.0, 800)
    quotients = [rayleigh_quotient(g, u) for u in random_field_corpus(g, 16)]
    assert min(quotients) >= sobolev_S() * (1 - 1e-2)


# -- nonexistence ledger --------------------------------------------------------------


def test_h_function_examples():
    assert h_function(0.0, 2.5) == 0.0
    assert h_function(1.0, 2.5) == 1.0
    assert h_function(0.25, 2.9) == pytest.approx(0.0625 + 0.015625 - 0.25**2.9, rel=1e-14)
    assert h_function(0.25, 2.9) == pytest.approx(0.0602, abs=1e-4)


@pytest.mark.parametrize("p", [2.2, 2.5, 2.8])
def test_h_function_nonnegative(p):
    t = np.linspace(0, 10, 10_000)
    h = h_function(t, p)
    assert h[0] == 0.0
    assert np.all(h[1:] > 0)


def test_nonexistence_threshold_examples():
    S = sobolev_S()
    vb = 4 * math.pi / 3
    assert nonexistence_threshold(3.0, vb, S) == 0.25
    assert vb ** (2 / 3) == pytest.approx(2.5985, abs=1e-4)
    expected = 1 / (4 * (1 - vb ** (2 / 3) / S))
    assert nonexistence_threshold(2.5, vb, S) == pytest.approx(expected, rel=1e-14)
    assert nonexistence_threshold(2.5, vb, S) == pytest.approx(0.4756, abs=1e-4)
    assert nonexistence_threshold(2.5, S**1.5, S) is None
    assert nonexistence_threshold(2.5, 100.0) is None
    for p in (2.0, 3.5):
        with pytest.raises(ValueError):
            nonexistence_threshold(p, vb)


@given(vb=st.floats(0, 1e3), S=st.floats(0.1, 100))
def test_threshold_at_cubic_is_quarter(vb, S):
    assert nonexistence_threshold(3.0, vb, S) == 0.25


# -- cross term ----------------------------------------------------------------------


def test_cross_term_zero():
    g = build_grid("radial", 4.0, 100)
    assert cross_term_inequality_check(g, np.zeros(g.shape), 1.0) == (0.0, 0.0)


def test_cross_term_random_smooth_fields():
    g = build_grid("radial", 8.0, 800)
    for u in random_field_corpus(g, 16, seed=7):
        lhs, rhs = cross_term_inequality_check(g, u, 1.0)
        assert lhs <= rhs + 1e-9


def test_cross_term_optimal_mu():
    g = build_grid("radial", 8.0, 1600)
    u = np.exp(-g.r**2) * (1 + 0.5 * np.exp(-((g.r - 2) ** 2)))
    G = g.grad_energy(u)
    Q = nonlocal_energy(g, u)
    mu_opt = math.sqrt(G / (4 * Q))
    best = cross_term_inequality_check(g, u, mu_opt)[1]
    for f in (0.9, 1.1, 0.5, 2.0):
        assert cross_term_inequality_check(g, u, f * mu_opt)[1] > best
    assert best == pytest.approx(math.sqrt(G * Q), rel=1e-12)
    # int grad(phi_u) grad|u| = int |u|^3, bounded by the optimum through Cauchy-Schwarz
    phi = newton_potential(g, u * u)
    cross = float(phi @ (g.stiffness() @ np.abs(u)))
    lhs = g.integrate(np.abs(u) ** 3)
    assert cross == pytest.approx(lhs, rel=1e-3)
    assert cross <= best


# -- Moser bound -------------------------------------------------------------------------


def test_moser_example_and_errors():
    c0 = moser_linf_bound(3.0, 2.0, 5.478, 0.5)
    assert c0 == pytest.approx(4 * math.sqrt(1 / 5.478) * 2 / math.sqrt(5.478), rel=1e-14)
    # the usual four-digit quote rounds the intermediate factors
    assert c0 == pytest.approx(1.4605, abs=2e-4)
    with pytest.raises(ValueError):
        moser_linf_bound(6.0, 2.0, 5.478, 0.5)
    with pytest.raises(ValueError):
        moser_linf_bound(3.0, -1.0, 5.478, 0.5)


@given(p=st.floats(2.05, 3.95), T=st.floats(0.1, 100), d=st.floats(0.05, 5), k=st.floats(1.01, 3))
def test_moser_monotone(p, T, d, k):
    S = sobolev_S()
    base = moser_linf_bound(p, T, S, d)
    assert moser_linf_bound(p, k * T, S, d) > base
    assert moser_linf_bound(p, T, S, k * d) > base


# -- Nehari -------------------------------------------------------------------------------


def test_nehari_defect(small, rng):
    g, V, _, C = small
    fun = Functional(g, V, SolverParams(lam=10.0, mu=0.2, p=8 / 3))
    assert nehari_defect(fun, np.zeros(g.shape)) == 0.0
    u = rng.random(g.shape)
    assert nehari_defect(fun, u) > 1.0


# -- decay ----------------------------------------------------------------------------------


def test_fit_decay_synthetic_exact():
    g = build_grid("radial", 6.0, 600)
    u = 2.0 * np.exp(-3.0 * (g.r - 1.0))
    fit = fit_decay(g, u, 4.0, 1.0)
    assert fit.A == pytest.approx(4.0, rel=1e-12)
    assert fit.beta == pytest.approx(1.5, rel=1e-12)
    assert fit.envelope_margin >= 0
    assert np.all(fit.envelope(g.r[g.r > 1], 4.0) >= u[g.r > 1] * (1 - 1e-15))


@given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 2**32 - 1))
def test_fit_decay_scaling(c, seed):
    rng = np.random.default_rng(seed)
    g = build_grid("radial", 6.0, 300)
    u = np.exp(-2.0 * g.r) * (1 + 0.1 * rng.random(g.shape))
    a, b = fit_decay(g, u, 9.0, 1.5), fit_decay(g, c * u, 9.0, 1.5)
    assert b.beta == pytest.approx(a.beta, rel=1e-9)
    assert b.A == pytest.approx(c * a.A, rel=1e-9)
    assert a.envelope_margin >= 0 and b.envelope_margin >= 0
    assert a.A > 0 and a.beta > 0 and a.R > 0


def test_fit_decay_errors():
    g = build_grid("radial", 2.0, 20)
    with pytest.raises(ValueError):
        fit_decay(g, np.ones(g.shape), 1.0, 1.7)
    u = np.exp(-g.r)
    u[15] = 0.0
    with pytest.raises(ValueError):
        fit_decay(g, u, 1.0, 0.5)


def test_radial_profile_box_shell_max():
    g = build_grid("box", 2.0, 16)
    r, prof = radial_profile(g, np.exp(-g.radius))
    assert np.all(np.diff(prof) < 0)
    assert prof[0] == pytest.approx(np.exp(-g.radius.min()))


# -- localisation and distances ---------------------------------------------------------------


def test_localization_mass_examples():
    g = build_grid("radial", 3.0, 300)
    omega = g.r <= 1
    assert localization_mass(g, np.where(omega, 1.0, 0.0), omega) == 1.0
    assert localization_mass(g, np.where(omega, 0.0, 1.0), omega) == 0.0
    with pytest.raises(ValueError):
        localization_mass(g, np.zeros(g.shape), omega)


@given(seed=st.integers(0, 2**32 - 1))
def test_localization_mass_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    g = build_grid("radial", 3.0, 60)
    m = localization_mass(g, rng.standard_normal(g.shape), g.r <= rng.uniform(0, 3))
    assert 0.0 <= m <= 1.0


def test_h1_distance():
    g = build_grid("radial", 3.0, 100)
    u = np.exp(-g.r**2)
    assert h1_distance(g, u, u) == 0.0
    assert h1_distance(g, u, 0 * u) == pytest.approx(math.sqrt(g.grad_energy(u) + g.integrate(u * u)))


def test_strictly_decreasing():
    assert strictly_decreasing([3.0, 2.0, 1.0])
    assert strictly_decreasing([1.0, 1.0005])
    assert not strictly_decreasing([1.0, 1.01])


def test_convergence_study_rejects_unknown_kind(small):
    g, V, omega, C = small
    with pytest.raises(ValueError):
        convergence_study("Sideways", [1.0], g, V, omega, 8 / 3, constants=C)


def test_convergence_study_both_small():
    g = build_grid("radial", 6.0, 300)
    V = np.where(g.r <= 1, 0.0, np.minimum((g.r - 1) ** 2, 1.0))
    omega = g.r <= 1
    limit, rows = convergence_study(BOTH, [(100.0, 1e-3), (400.0, 1e-4)], g, V, omega, 8 / 3)
    assert limit.converged and not np.any(limit.solution[~omega])
    assert [r.lam for r in rows] == [100.0, 400.0]
    assert all(r.distance is not None and r.distance >= 0 for r in rows)
    assert rows[1].distance < rows[0].distance
    assert rows[1].mass_outside_omega < rows[0].mass_outside_omega
