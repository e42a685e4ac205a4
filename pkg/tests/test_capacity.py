import math

import numpy as np
import pytest
from scipy import integrate

from spherefield.capacity import (CapMeasure, DiscreteMeasure, PointMass, capacity_estimate,
                                  classify_shells, criterion_sign, energy, hitting_probability_mc,
                                  integrability_test, neighbour_step, pair_distance_density,
                                  phi_kernel, var_identity_residual)
from spherefield.covariance import CovarianceModel
from spherefield.geometry import Cap, SpherePoint
from spherefield.spectrum import condition_a_spectrum, example2_power_spectrum, normalize


@pytest.fixture(scope="module")
def model25():
    return CovarianceModel(normalize(condition_a_spectrum(2.5, l_max=1024)))


@pytest.fixture(scope="module")
def model3():
    return CovarianceModel(normalize(condition_a_spectrum(3.0, l_max=1024)))


def test_kernel_maximal_at_origin(model25):
    th = np.geomspace(1e-4, 3.0, 30)
    for d in (1, 3):
        base = phi_kernel(model25, th, d)
        for a in (0.3, 1.0, -2.0):
            assert np.all(phi_kernel(model25, th, d, a) <= base)


def test_kernel_independent_case():
    m = CovarianceModel(example2_power_spectrum(2001, method="closed"))
    assert phi_kernel(m, math.pi / 2, 1) == pytest.approx(1 / (2 * math.pi), abs=1e-3)


@pytest.mark.parametrize("alpha,d", [(2.5, 1), (3.0, 2), (3.0, 3)])
def test_kernel_small_distance_slope(alpha, d):
    m = CovarianceModel(normalize(condition_a_spectrum(alpha, l_max=1024)))
    th = np.geomspace(1e-4, 1e-2, 30)
    slope = np.polyfit(np.log(th), np.log(phi_kernel(m, th, d)), 1)[0]
    assert slope == pytest.approx(-d * (alpha - 2) / 2, abs=0.1)


def test_variance_identity_residual(model3):
    assert var_identity_residual(model3, np.geomspace(1e-3, 3.0, 20)).max() < 1e-10


def test_point_and_discrete_measures(model25):
    assert energy(model25, 1, PointMass(SpherePoint(0.1, 0.2))).infinite
    dm = DiscreteMeasure(np.eye(3), np.array([0.2, 0.3, 0.5]))
    assert energy(model25, 1, dm).infinite
    with pytest.raises(TypeError):
        energy(model25, 1, object())


def test_cap_energy_finite_and_divergent(model25, model3):
    cap = Cap(SpherePoint(0.0, 0.0), 0.2)
    res = energy(model25, 1, CapMeasure(cap))
    assert res.status == "finite" and 0 < res.value < math.inf
    assert np.all(np.diff(res.trace) >= 0)
    div = energy(model3, 4, CapMeasure(cap))
    assert div.status == "divergent" and div.value == math.inf


def test_capacity_monotone_in_cap(model25):
    caps = [Cap(SpherePoint(0.0, 0.0), r) for r in (0.05, 0.1, 0.2, 0.4)]
    vals = [capacity_estimate(model25, 1, c, family=(0.0,))[0] for c in caps]
    assert all(v > 0 for v in vals)
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_capacity_zero_at_criterion_boundary(model3):
    cap, results = capacity_estimate(model3, 4, Cap(SpherePoint(0.0, 0.0), 0.1))
    assert cap == 0.0 and all(r.status != "finite" for r in results)


@pytest.mark.parametrize("alpha,d,expected", [(3.0, 2, "integrable"), (3.0, 4, "divergent"),
                                              (2.5, 7, "integrable"), (2.5, 8, "divergent")])
def test_integrability(alpha, d, expected):
    res = integrability_test(alpha, d, 0.5)
    assert res.classification == expected == res.numeric
    assert (criterion_sign(alpha, d) > 0) == (expected == "integrable")


def test_integrability_validation():
    with pytest.raises(ValueError):
        integrability_test(2.0, 1, 0.5)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0])
def test_pair_distance_density_normalised(gamma):
    r = 0.3
    val, _ = integrate.quad(lambda t: pair_distance_density(r, gamma, t)[0], 0, 2 * r, limit=200)
    assert val == pytest.approx(1.0, abs=2e-3)
    assert pair_distance_density(r, gamma, 2 * r + 0.01)[0] == 0.0


def test_pair_distance_density_monte_carlo():
    r = 0.3
    rng = np.random.default_rng(1)
    n = 200000
    # uniform on a cap: 1 - cos(rho) uniform
    def sample():
        rho = np.arccos(1 - rng.random(n) * (1 - math.cos(r)))
        ph = rng.random(n) * 2 * math.pi
        return np.column_stack([np.sin(rho) * np.cos(ph), np.sin(rho) * np.sin(ph), np.cos(rho)])
    d = np.arccos(np.clip(np.einsum("ij,ij->i", sample(), sample()), -1, 1))
    hist, edges = np.histogram(d, bins=12, range=(0, 2 * r), density=True)
    mids = 0.5 * (edges[1:] + edges[:-1])
    assert np.allclose(pair_distance_density(r, 0.0, mids), hist, atol=0.1 * hist.max())


def test_classify_shells():
    geo = 0.5 ** np.arange(20)
    val, status, trace, decay = classify_shells(geo)
    assert status == "finite" and val == pytest.approx(2.0, rel=1e-9)
    assert classify_shells(np.ones(20))[1] == "divergent"
    mixed = np.concatenate([geo[:17], [1.0, 1.0, 0.5]])
    assert classify_shells(mixed)[1] == "indeterminate"


def test_hitting_frequencies():
    s = normalize(condition_a_spectrum(2.5, l_max=64))
    m = CovarianceModel(s)
    eps = np.geomspace(0.5, neighbour_step(m, math.pi / 65), 5)
    tab = hitting_probability_mc(s, 1, Cap(SpherePoint(0.0, 0.0), math.pi / 2), 0.0, eps, 100,
                                 seed=3)
    assert np.all(tab.frequency >= 0.9)
    assert np.all(np.diff(tab.hits) <= 0)
    far = hitting_probability_mc(s, 1, Cap(SpherePoint(0.0, 0.0), 0.1), 20.0, eps, 100)
    assert np.all(far.hits == 0) and far.trend == "none"
    assert len(list(tab.rows())) == 5
    with pytest.raises(ValueError):
        hitting_probability_mc(s, 1, Cap(SpherePoint(0.0, 0.0), 0.1), 0.0, eps, 10)
