import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from spiked_lss import BulkDistribution, DomainError, phi
from spiked_lss.contour import build_contour
from spiked_lss.spectrum import build_H_n, phi_n
from spiked_lss.stieltjes import (
    density_at,
    m_under_real,
    solve_finite_n_pair,
    solve_m_under,
    solve_m_under_array,
    support_edges,
)

from conftest import DELTA1, simulation_spectrum


def quadratic_root(z, c):
    """Herglotz root of z m^2 + (z + 1 - c) m + 1 = 0 (H = delta_1)."""
    b = z + 1 - c
    d = np.sqrt(b * b - 4 * z + 0j)
    r1, r2 = (-b + d) / (2 * z), (-b - d) / (2 * z)
    return np.where(np.sign(r1.imag) == np.sign(z.imag), r1, r2)


def mp_density(x, c):
    a, b = (1 - math.sqrt(c)) ** 2, (1 + math.sqrt(c)) ** 2
    return math.sqrt(max((b - x) * (x - a), 0.0)) / (2 * math.pi * c * x)


def z_grid(n=100, seed=0):
    rng = np.random.default_rng(seed)
    re = rng.uniform(-1, 5, n)
    im = rng.choice([-1, 1], n) * 10 ** rng.uniform(-3, 1, n)
    return re + 1j * im


# --- solve_m_under ----------------------------------------------------------

def test_quadratic_oracle_point():
    z, c = 2 + 0.1j, 0.5
    sol = solve_m_under(z, c, DELTA1)
    assert abs(sol.m_under - quadratic_root(np.array(z), c)) < 1e-12
    assert sol.m_under.imag > 0
    assert sol.residual < 1e-12


@pytest.mark.parametrize("c", [0.1, 0.5, 0.9, 1.7])
def test_quadratic_oracle_grid(c):
    z = z_grid()
    got = np.array([solve_m_under(zi, c, DELTA1).m_under for zi in z])
    assert np.max(np.abs(got - quadratic_root(z, c))) < 1e-10
    m, _, _ = solve_m_under_array(z, c, DELTA1)
    assert np.max(np.abs(m - quadratic_root(z, c))) < 1e-10


def test_large_imaginary_z():
    sol = solve_m_under(1e6j, 0.5, DELTA1)
    assert abs(sol.m_under - 1e-6j) < 1e-9


def test_inside_support_is_herglotz():
    assert solve_m_under(1 + 0.01j, 0.25, DELTA1).m_under.imag > 0
    assert solve_m_under(1 - 0.01j, 0.25, DELTA1).m_under.imag < 0


def test_real_point_in_support_raises():
    with pytest.raises(DomainError):
        solve_m_under(1.0, 0.25, DELTA1)


def test_bad_hint_recovers():
    sol = solve_m_under(1.5 + 0.05j, 0.3, DELTA1, hint=-5 - 3j)
    assert abs(sol.m_under - quadratic_root(np.array(1.5 + 0.05j), 0.3)) < 1e-11


def test_implicit_derivative_matches_finite_difference():
    H = BulkDistribution(((1.0, 0.3), (4.0, 0.7)))
    for z in z_grid(30, seed=1):
        sol = solve_m_under(z, 0.4, H)
        h = 1e-6 * abs(z)
        fd = (solve_m_under(z + h, 0.4, H).m_under - solve_m_under(z - h, 0.4, H).m_under) / (2 * h)
        assert abs(sol.m_prime - fd) <= 1e-5 * abs(fd)


def test_conjugate_symmetry():
    H = BulkDistribution(((1.0, 0.5), (3.0, 0.5)))
    z = 2 + 0.3j
    assert solve_m_under(z.conjugate(), 0.2, H).m_under == pytest.approx(solve_m_under(z, 0.2, H).m_under.conjugate())


def test_branch_continuity_along_contour():
    H = BulkDistribution(((1.0, 0.5), (5.0, 0.5)))
    c = 0.1
    spec = build_contour(support_edges(c, H), nodes_per_side=512, rule="midpoint")
    z, _ = spec.nodes_and_weights()
    m, _, _ = solve_m_under_array(z, c, H)
    dz = np.abs(np.diff(z))
    dm = np.abs(np.diff(m))
    mp = np.abs(solve_m_under_array(z, c, H)[1])
    # successive changes bounded by a small multiple of |m'| |dz|
    assert np.all(dm <= 3.0 * np.maximum(mp[:-1], mp[1:]) * dz + 1e-12)


# --- support_edges ----------------------------------------------------------

def test_support_mp():
    (s,) = support_edges(0.25, DELTA1)
    assert s.left_edge == pytest.approx(0.25, abs=1e-12)
    assert s.right_edge == pytest.approx(2.25, abs=1e-12)


def test_support_simulation_ratio():
    c = 1 / 30
    (s,) = support_edges(c, DELTA1)
    assert s.left_edge == pytest.approx((1 - math.sqrt(c)) ** 2, rel=1e-12)
    assert s.right_edge == pytest.approx((1 + math.sqrt(c)) ** 2, rel=1e-12)


def test_support_shrinks_as_c_vanishes():
    (s,) = support_edges(1e-8, DELTA1)
    assert s.left_edge == pytest.approx(1.0, abs=1e-3)
    assert s.right_edge == pytest.approx(1.0, abs=1e-3)


def test_support_two_intervals():
    H = BulkDistribution(((1.0, 0.5), (10.0, 0.5)))
    edges = support_edges(0.05, H)
    assert len(edges) == 2
    assert edges[0].right_edge < edges[1].left_edge
    # density vanishes in the gap and is positive inside each interval
    gap = 0.5 * (edges[0].right_edge + edges[1].left_edge)
    assert density_at(gap, 0.05, H) == 0.0
    for s in edges:
        assert density_at(0.5 * (s.left_edge + s.right_edge), 0.05, H) > 0


def test_support_zero_atoms_are_ignored():
    spec = simulation_spectrum(1)
    H_n, H_2n = build_H_n(spec)
    a = support_edges(spec.c_n, H_n)[0]
    b = support_edges(spec.c_nM, H_2n)[0]
    assert a.left_edge == pytest.approx(b.left_edge, rel=1e-12)
    assert a.right_edge == pytest.approx(b.right_edge, rel=1e-12)


# --- m_under_real -----------------------------------------------------------

def test_real_tail():
    m, _ = m_under_real(1e6, 0.5, DELTA1)
    assert m < 0
    assert 1e6 * m == pytest.approx(-1.0, abs=1e-6)


def test_real_at_spike_location():
    alpha, c = 10.0, 0.5
    m, m2 = m_under_real(phi(alpha, c, DELTA1), c, DELTA1)
    assert m == pytest.approx(-1 / alpha, rel=1e-13)
    assert m2 > 0


@given(st.floats(2.3, 1e4), st.floats(0.05, 0.95))
def test_real_cauchy_schwarz(lam, c):
    (s,) = support_edges(c, DELTA1)
    if lam <= s.right_edge * 1.001:
        return
    m, m2 = m_under_real(lam, c, DELTA1)
    assert m2 >= m * m * (1 - 1e-12)


def test_real_left_of_support():
    c = 0.5
    lam = 0.05
    m, m2 = m_under_real(lam, c, DELTA1)
    sol = solve_m_under(lam + 1e-9j, c, DELTA1)
    assert m == pytest.approx(sol.m_under.real, rel=1e-6)
    assert m2 > 0


def test_real_inside_support_raises():
    with pytest.raises(DomainError):
        m_under_real(1.0, 0.5, DELTA1)


# --- finite-n pair ----------------------------------------------------------

def test_finite_n_pair_agree(sim_spectrum):
    H_n, H_2n = build_H_n(sim_spectrum)
    spec = build_contour(support_edges(sim_spectrum.c_nM, H_2n), phi_n(sim_spectrum), nodes_per_side=8)
    for z in spec.nodes_and_weights()[0]:
        a, b = solve_finite_n_pair(z, sim_spectrum)
        assert abs(a - b) < 1e-8


def test_finite_n_pair_without_spikes():
    from spiked_lss import PopulationSpectrum

    spec = PopulationSpectrum((), DELTA1, 100, 300)
    a, b = solve_finite_n_pair(1.5 + 0.2j, spec)
    assert a == b


def test_finite_n_pair_converges_to_limit():
    from spiked_lss import PopulationSpectrum, SpikeGroup

    c = 0.5
    z = np.array([0.5 + 0.3j, 2.0 + 0.1j, 3.5 - 0.2j])
    limit = quadratic_root(z, c)
    errs = []
    for n in (1000, 100000):
        spec = PopulationSpectrum((SpikeGroup(0, 0, 20.0, 3),), DELTA1, n // 2, n)
        errs.append(max(abs(solve_finite_n_pair(zi, spec)[0] - li) for zi, li in zip(z, limit)))
    assert errs[1] < errs[0] / 50


# --- density ----------------------------------------------------------------

def test_density_mp_closed_form():
    c = 0.25
    for x in (0.3, 0.7, 1.0, 1.6, 2.2):
        assert density_at(x, c, DELTA1) == pytest.approx(mp_density(x, c), rel=1e-9)


def test_density_zero_outside():
    assert density_at(0.2, 0.25, DELTA1) == 0.0
    assert density_at(2.3, 0.25, DELTA1) == 0.0
    assert density_at(-1.0, 0.25, DELTA1) == 0.0


def test_density_normalized():
    val, _ = quad(lambda x: density_at(x, 0.25, DELTA1), 0.25, 2.25, limit=200)
    assert val == pytest.approx(1.0, abs=1e-4)


def test_density_general_H_normalized():
    H = BulkDistribution(((1.0, 0.5), (3.0, 0.5)))
    (s,) = support_edges(0.3, H)
    val, _ = quad(lambda x: density_at(x, 0.3, H), s.left_edge, s.right_edge, limit=400)
    assert val == pytest.approx(1.0, abs=1e-4)
