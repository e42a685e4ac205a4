import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre as npleg

from spherefield.covariance import (CovarianceModel, conditional_variance, density_at_diagonal,
                                    joint_density_p, rho_alpha, slnd_ratio)
from spherefield.geometry import SpherePoint, random_points
from spherefield.spectrum import condition_a_spectrum, example2_power_spectrum, normalize
from spherefield.verification import random_configuration


@pytest.fixture(scope="module")
def model3():
    return CovarianceModel(normalize(condition_a_spectrum(3.0, l_max=256)), tail=False)


@pytest.fixture(scope="module")
def model_tail():
    return CovarianceModel(normalize(condition_a_spectrum(3.0, l_max=256)))


@pytest.fixture(scope="module")
def model_ex2():
    return CovarianceModel(example2_power_spectrum(2001, method="closed"))


def oracle_cov(model, theta):
    w = model.spectrum.weights
    return npleg.legval(np.cos(theta), w)


def test_unit_variance(model3, model_tail):
    assert model3.covariance(0.0) == pytest.approx(1.0, abs=1e-13)
    assert model_tail.covariance(0.0) == pytest.approx(1.0, abs=1e-13)
    assert model_tail.variogram(0.0) == 0.0


def test_covariance_matches_numpy_legendre(model3):
    th = np.linspace(0, math.pi, 37)
    assert np.allclose(model3.covariance(th), oracle_cov(model3, th), atol=1e-13)
    assert np.allclose(model3.variogram(th), 2 * (1 - model3.covariance(th)), atol=1e-12)


def test_example2_covariance(model_ex2):
    assert model_ex2.covariance(math.pi / 2) == pytest.approx(0.0, abs=2e-3)
    assert model_ex2.covariance(math.pi) == pytest.approx(-1.0, abs=5e-3)
    th = np.linspace(0.2, 2.9, 10)
    assert np.allclose(model_ex2.covariance(th), 1 - 2 * th / math.pi, atol=5e-3)


def test_variogram_scaling(model_tail):
    th = np.geomspace(1e-3, 1e-1, 40)
    v = model_tail.variogram(th)
    ratio = v / th
    assert ratio.max() / ratio.min() < 4.0
    slope = np.polyfit(np.log(th), np.log(v), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_rho_alpha():
    assert rho_alpha(0.04, 3.0) == pytest.approx(0.2, rel=1e-15)
    assert rho_alpha(0.0, 2.5) == 0.0
    with pytest.raises(ValueError):
        rho_alpha(0.1, 2.0)


def test_covariance_rejects_bad_angle(model3):
    with pytest.raises(ValueError):
        model3.covariance(-0.1)
    with pytest.raises(ValueError):
        model3.covariance(4.0)


def _numpy_conditional(model, x, pts):
    allp = np.vstack([x, pts])
    ang = np.arccos(np.clip(allp @ allp.T, -1, 1))
    k = oracle_cov(model, ang)
    return k[0, 0] - k[0, 1:] @ np.linalg.solve(k[1:, 1:], k[1:, 0])


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6), st.integers(1, 5), st.floats(0.05, 1.0))
def test_conditional_variance_against_numpy(model3, seed, n, scale):
    rng = np.random.default_rng(seed)
    x, pts = random_configuration(rng, scale, n)
    got = conditional_variance(model3, x, pts)
    ref = _numpy_conditional(model3, x, pts)
    assert float(got) == pytest.approx(max(0.0, ref), abs=1e-9)


def test_single_conditioner_closed_form(model3):
    x = SpherePoint(0.3, 0.0)
    y = SpherePoint(0.9, 0.0)
    c = model3.covariance(0.6)
    assert float(conditional_variance(model3, x, [y])) == pytest.approx(1 - c * c, abs=1e-12)
    assert float(conditional_variance(model3, x, [])) == pytest.approx(1.0)


def test_self_conditioning_and_monotone(model3, rng):
    x = random_points(1, rng)[0]
    pts = random_points(6, rng)
    assert float(conditional_variance(model3, x, np.vstack([pts, x]))) < 1e-8
    vals = [float(conditional_variance(model3, x, pts[:k])) for k in range(1, 7)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_slnd_far_conditioner(model3):
    x = SpherePoint(0.2, 0.0)
    y = SpherePoint(1.6, 0.0)
    theta = 1.4
    c = model3.covariance(theta)
    assert slnd_ratio(model3, x, [y]) == pytest.approx((1 - c * c) / rho_alpha(theta, 3.0) ** 2,
                                                      rel=1e-10)


def test_slnd_floor_stable_across_scales(model_tail):
    rng = np.random.default_rng(11)
    floors = []
    for scale in (1e-2, 3e-2, 1e-1):
        r = []
        for _ in range(40):
            x, pts = random_configuration(rng, scale, 5)
            r.append(slnd_ratio(model_tail, x, pts))
        floors.append(min(r))
    assert min(floors) > 0
    assert max(floors) / min(floors) < 3.0


def test_joint_density_independent_case(model_ex2):
    assert joint_density_p(model_ex2, math.pi / 2, (0.0, 0.0)) == pytest.approx(
        1 / (2 * math.pi), abs=1e-3)


@pytest.mark.parametrize("theta", [1e-3, 0.05, 0.7, 2.5])
def test_joint_density_variance_identity(model_tail, theta):
    p = joint_density_p(model_tail, theta, (0.0, 0.0))
    c = model_tail.covariance(theta)
    assert (2 * math.pi * p) ** -2 == pytest.approx(1 - c * c, abs=1e-10)
    assert density_at_diagonal(model_tail, theta, 0.0) == pytest.approx(p, rel=1e-12)


def test_joint_density_integrates_to_one(model3):
    t = np.linspace(-8, 8, 401)
    h = t[1] - t[0]
    vals = np.array([[joint_density_p(model3, 0.3, (a, b)) for b in t] for a in t])
    assert vals.sum() * h * h == pytest.approx(1.0, abs=1e-3)


def test_export_table(model3, tmp_path):
    path = tmp_path / "v.csv"
    model3.export_table([0.1, 0.2], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "theta,value,tail_bound" and len(lines) == 3
