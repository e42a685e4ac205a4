import math

import numpy as np
import pytest

from spherefield.covariance import CovarianceModel
from spherefield.geometry import Cap, EquiangularGrid, PointSet, SpherePoint
from spherefield.spectrum import PowerSpectrum, condition_a_spectrum, normalize
from spherefield.synthesis import (FieldSample, band_limits, band_split, evaluate_field,
                                   evaluate_points, field_summary, oscillation, replicate_seed,
                                   sample_coefficients, vector_field)

N_DRAWS = 10000


@pytest.fixture(scope="module")
def small_spec():
    return normalize(condition_a_spectrum(2.5, l_max=4))


@pytest.fixture(scope="module")
def many_draws(small_spec):
    return [[sample_coefficients(small_spec, (0, 4), replicate_seed(0, i), j) for j in (0, 1)]
            for i in range(N_DRAWS)]


def test_coefficient_moments(small_spec, many_draws):
    for ell in range(1, 5):
        for m in range(ell + 1):
            x = np.array([abs(d[0].alm[ell, m]) ** 2 for d in many_draws])
            se = x.std(ddof=1) / math.sqrt(N_DRAWS)
            assert abs(x.mean() - small_spec.values[ell]) <= 5 * se
        re = np.array([d[0].alm[ell, 1].real for d in many_draws])
        assert re.var() == pytest.approx(small_spec.values[ell] / 2, rel=0.1)


def test_zonal_coefficients_are_real(many_draws):
    assert all(d[0].alm[ell, 0].imag == 0.0 for d in many_draws[:100] for ell in range(5))


def test_components_uncorrelated(many_draws):
    xyz = np.array([[0.3, -0.5, math.sqrt(1 - 0.34)]])
    a = np.array([evaluate_points(d[0], xyz)[0] for d in many_draws])
    b = np.array([evaluate_points(d[1], xyz)[0] for d in many_draws])
    prod = a * b
    se = prod.std(ddof=1) / math.sqrt(N_DRAWS)
    assert abs(prod.mean()) <= 5 * se


def test_deterministic_and_stream_separated(small_spec):
    a = sample_coefficients(small_spec, (0, 4), 7)
    b = sample_coefficients(small_spec, (0, 4), 7)
    c = sample_coefficients(small_spec, (0, 4), 7, component=1)
    assert np.array_equal(a.alm, b.alm)
    assert not np.array_equal(a.alm, c.alm)
    # a sub-band draw reuses the same per-degree streams
    sub = sample_coefficients(small_spec, (2, 3), 7)
    assert np.array_equal(sub.alm[2:4], a.alm[2:4, :4])


def test_negative_orders(small_spec):
    c = sample_coefficients(small_spec, (0, 4), 3)
    for m in range(1, 4):
        assert c.coefficient(3, -m) == (-1) ** m * np.conj(c.coefficient(3, m))
    assert c.coefficient(5, 0) == 0j


def test_constant_field():
    vals = np.zeros(4)
    vals[0] = 4 * math.pi
    s = PowerSpectrum(vals, alpha=3.0, k0=1.0, provenance="custom", tail="none")
    c = sample_coefficients(s, (0, 3), 5)
    f = evaluate_field(c, EquiangularGrid(8, 16))
    expect = c.alm[0, 0].real / math.sqrt(4 * math.pi)
    assert np.allclose(f.values, expect, atol=1e-14)


@pytest.fixture(scope="module")
def moderate():
    s = normalize(condition_a_spectrum(3.0, l_max=32))
    grid = EquiangularGrid(66, 132)
    fields = [evaluate_field(sample_coefficients(s, (0, 32), replicate_seed(1, i)), grid)
              for i in range(4000)]
    return s, grid, np.array([f.values[0] for f in fields])


def test_unit_variance_over_draws(moderate):
    s, grid, vals = moderate
    w = grid.weights / grid.weights.sum()
    per_draw = (vals ** 2) @ w
    assert per_draw.mean() == pytest.approx(1.0, abs=0.02)


def test_empirical_covariance(moderate):
    s, grid, vals = moderate
    model = CovarianceModel(s, tail=False)
    v = vals.reshape(len(vals), grid.n_theta, grid.n_phi)
    for k in (1, 4, 16, 40):
        # pairs k rows apart along each meridian
        prods = (v[:, :-k, :] * v[:, k:, :]).mean(axis=(1, 2))
        theta = k * (grid.theta[1] - grid.theta[0])
        se = prods.std(ddof=1) / math.sqrt(len(prods))
        assert abs(prods.mean() - model.covariance(theta)) <= 3 * se


def test_vector_field_components():
    s = normalize(condition_a_spectrum(2.5, l_max=16))
    grid = EquiangularGrid(34, 68)
    f1 = vector_field(s, 1, (0, 16), grid, 9)
    direct = evaluate_field(sample_coefficients(s, (0, 16), 9), grid)
    assert np.array_equal(f1.values, direct.values)
    f3 = vector_field(s, 3, (0, 16), grid, 9, threads=3)
    assert f3.d == 3
    assert np.array_equal(f3.values[0], f1.values[0])
    assert np.array_equal(f3.take(2).values, vector_field(s, 2, (0, 16), grid, 9).values)


def test_grid_matches_direct_summation():
    s = normalize(condition_a_spectrum(2.5, l_max=40))
    c = sample_coefficients(s, (0, 40), 2)
    grid = EquiangularGrid(82, 164)
    f = evaluate_field(c, grid)
    idx = np.arange(0, grid.size, 997)
    direct, resid = evaluate_points(c, grid.xyz[idx], return_residue=True)
    assert np.allclose(f.values[0, idx], direct, atol=1e-12)
    assert resid.max() <= 1e-9
    f2 = evaluate_field(c, PointSet(grid.xyz[idx]))
    assert np.allclose(f2.values[0], direct, atol=1e-13)


def test_band_split_adds_up():
    s = normalize(condition_a_spectrum(3.0, l_max=64))
    grid = EquiangularGrid(130, 260)
    split = band_split(s, 8, 30, grid, 4, d=2)
    full = vector_field(s, 2, (0, 64), grid, 4)
    assert np.allclose(split.full.values, full.values, atol=1e-12)
    with pytest.raises(ValueError):
        band_split(s, 30, 8, grid, 4)


def test_band_limits():
    assert band_limits(0.01, 4, 0.25) == (int(4 ** -0.25 / 0.01), int(4 ** 0.75 / 0.01))


def test_too_few_longitudes():
    s = normalize(condition_a_spectrum(2.5, l_max=40))
    c = sample_coefficients(s, (0, 40), 2)
    with pytest.raises(ValueError):
        evaluate_field(c, EquiangularGrid(40, 64))


def test_oscillation_monotone_in_radius():
    s = normalize(condition_a_spectrum(3.0, l_max=64))
    f = vector_field(s, 2, (0, 64), EquiangularGrid(130, 260), 1)
    center = SpherePoint(1.0, 2.0)
    osc = [oscillation(f, Cap(center, r)) for r in (0.05, 0.1, 0.2, 0.4, 0.8)]
    assert all(b >= a for a, b in zip(osc, osc[1:]))


def test_oscillation_scaling():
    alpha = 3.0
    s = normalize(condition_a_spectrum(alpha, l_max=512))
    from spherefield.geometry import PolarCapGrid
    grid = PolarCapGrid(1026, 1026, 0.25)
    radii = np.array([0.025, 0.05, 0.1, 0.2])
    osc = []
    for i in range(100):
        f = evaluate_field(sample_coefficients(s, (0, 512), replicate_seed(2, i)), grid)
        osc.append([oscillation(f, Cap(SpherePoint(0.0, 0.0), r)) for r in radii])
    med = np.median(osc, axis=0)
    slope = np.polyfit(np.log(radii), np.log(med), 1)[0]
    assert slope == pytest.approx((alpha - 2) / 2, abs=0.15)


def test_save_load_round_trip(tmp_path):
    s = normalize(condition_a_spectrum(2.5, l_max=8))
    f = vector_field(s, 3, (0, 8), EquiangularGrid(18, 36), 2 ** 63 + 5)
    path = tmp_path / "f.sphf"
    f.save(path)
    g = FieldSample.load(path)
    assert g.d == 3 and np.array_equal(g.values, f.values)
    assert g.seed == f.seed and g.spectrum_digest == f.spectrum_digest
    pts = FieldSample(PointSet(f.grid.xyz[:10]), f.values[:, :10])
    pts.save(tmp_path / "p.sphf")
    back = FieldSample.load(tmp_path / "p.sphf")
    assert np.array_equal(back.grid.xyz, pts.grid.xyz) and np.array_equal(back.values, pts.values)


def test_field_summary_and_validation():
    grid = EquiangularGrid(4, 8)
    f = FieldSample(grid, np.full(grid.size, 2.0))
    summ = field_summary(f)
    assert summ["mean"] == [pytest.approx(2.0)] and summ["variance"][0] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        FieldSample(grid, np.full(grid.size + 1, 1.0))
    with pytest.raises(ValueError):
        FieldSample(grid, np.full(grid.size, np.nan))
