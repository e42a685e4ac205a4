import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from spherefield.geometry import SpherePoint, random_points
from spherefield.harmonics import (addition_theorem_check, harmonic_row, legendre_p,
                                   legendre_table, spherical_harmonic)


def test_small_degree_values():
    assert legendre_p(2, 0.5) == pytest.approx(-0.125, abs=1e-16)
    xs = np.linspace(-1, 1, 11)
    assert np.array_equal(legendre_p(1, xs), xs)
    for ell in (0, 1, 7, 100, 2048):
        assert legendre_p(ell, 1.0) == 1.0


@pytest.mark.parametrize("ell", [3, 50, 500, 2048])
def test_recurrence_against_extended_precision(ell):
    mpmath.mp.dps = 40
    for x in (-0.97, -0.3, 0.0001, 0.42, 0.999):
        ref = float(mpmath.legendre(ell, x))
        assert legendre_p(ell, x) == pytest.approx(ref, abs=1e-10)


@given(st.integers(0, 300), st.floats(-1.0, 1.0))
def test_legendre_bounded_and_matches_scipy(ell, x):
    v = legendre_p(ell, x)
    assert abs(v) <= 1.0 + 1e-12
    assert v == pytest.approx(special.eval_legendre(ell, x), abs=1e-11)


def test_legendre_table_matches_single_degree():
    tab = legendre_table(40, 0.3)
    assert np.allclose(tab, [legendre_p(ell, 0.3) for ell in range(41)], atol=1e-15)
    with pytest.raises(ValueError):
        legendre_p(2, 1.5)


def test_constant_harmonic():
    for p in (SpherePoint(0.2, 0.3), SpherePoint(2.9, 5.0)):
        assert spherical_harmonic(0, 0, p) == pytest.approx(1 / math.sqrt(4 * math.pi))


@pytest.mark.parametrize("ell", [1, 2, 5, 12])
def test_against_scipy_harmonics(ell):
    p = SpherePoint(0.7, 2.1)
    row = harmonic_row(ell, p.colatitude, p.longitude)
    ref = [special.sph_harm_y(ell, m, p.colatitude, p.longitude) for m in range(-ell, ell + 1)]
    assert np.allclose(row, ref, atol=1e-13)


@given(st.integers(0, 30), st.integers(0, 30), st.floats(0.0, math.pi), st.floats(0.0, 6.28))
def test_conjugate_symmetry(ell, m, th, ph):
    m = min(m, ell)
    row = harmonic_row(ell, th, ph)
    assert row[ell - m] == pytest.approx((-1) ** m * np.conj(row[ell + m]), abs=1e-12)


def test_sum_of_squares_and_addition(rng):
    for ell in (0, 3, 64, 257):
        p = SpherePoint(1.1, 0.4)
        row = harmonic_row(ell, p.colatitude, p.longitude)
        assert np.sum(np.abs(row) ** 2) == pytest.approx((2 * ell + 1) / (4 * math.pi), abs=1e-10)
    assert addition_theorem_check(0, SpherePoint(0.1, 0.1), SpherePoint(2, 3)) < 1e-16
    for a, b in zip(random_points(5, rng), random_points(5, rng)):
        assert addition_theorem_check(64, SpherePoint.from_vector(a),
                                      SpherePoint.from_vector(b)) <= 1e-10


def test_orthonormality_by_quadrature():
    l_max = 24
    x, wx = np.polynomial.legendre.leggauss(l_max + 2)
    th = np.arccos(x)
    n_phi = 2 * l_max + 2
    ph = 2 * math.pi * np.arange(n_phi) / n_phi
    basis = []
    labels = []
    for ell in range(l_max + 1):
        vals = np.array([[harmonic_row(ell, t, f) for f in ph] for t in th])
        for m in range(-ell, ell + 1):
            basis.append(vals[:, :, m + ell])
            labels.append((ell, m))
    wts = (wx[:, None] * np.full(n_phi, 2 * math.pi / n_phi)[None, :]).ravel()
    mat = np.array([b.ravel() for b in basis])
    gram = (mat * wts) @ mat.conj().T
    assert np.allclose(gram, np.eye(len(labels)), atol=1e-8)


def test_high_degree_stays_finite():
    for th in (1e-3, 0.5, math.pi / 2, 3.1):
        row = harmonic_row(4096, th, 0.3)
        assert np.all(np.isfinite(row))
