import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spherefield.geometry import Cap, EquiangularGrid, SpherePoint, build_voronoi_hierarchy
from spherefield.level_set import (box_dimension, default_tolerance, extract_level_set,
                                   hitting_indicator, occupied_counts, oscillation_constant,
                                   phi_premeasure)
from spherefield.local_time import GaugeFunction
from spherefield.spectrum import condition_a_spectrum, normalize
from spherefield.synthesis import FieldSample, vector_field
from spherefield.verification import shared_hierarchy


@pytest.fixture(scope="module")
def fine():
    return shared_hierarchy(1024, 7)


@pytest.fixture(scope="module")
def field():
    s = normalize(condition_a_spectrum(2.5, l_max=128))
    return vector_field(s, 1, (0, 128), EquiangularGrid(258, 516), 21)


def test_constant_field_level_sets():
    grid = EquiangularGrid(8, 16)
    f = FieldSample(grid, np.full(grid.size, 1.5))
    assert extract_level_set(f, 1.5, 1e-9).size == grid.size
    assert extract_level_set(f, 0.0, 0.1).empty
    with pytest.raises(ValueError):
        extract_level_set(f, 0.0, 0.0)


def test_sign_change_edges(field):
    ls = extract_level_set(field, 0.2, 1e-6)
    v = field.values[0] - 0.2
    a, b = ls.edges[:, 0], ls.edges[:, 1]
    assert len(a) > 0
    assert np.all(v[a] * v[b] <= 0)
    assert np.all(np.isin(np.where(np.abs(v[a]) <= np.abs(v[b]), a, b), ls.members))


@settings(max_examples=20)
@given(st.floats(1e-4, 0.5), st.floats(1e-4, 0.5), st.floats(-1.5, 1.5))
def test_nested_in_eps(field, e1, e2, t):
    lo, hi = sorted((e1, e2))
    small = extract_level_set(field, t, lo).members
    big = extract_level_set(field, t, hi).members
    assert np.all(np.isin(small, big))


def test_vector_level_set_sup_norm():
    s = normalize(condition_a_spectrum(2.5, l_max=16))
    f = vector_field(s, 2, (0, 16), EquiangularGrid(34, 68), 1)
    ls = extract_level_set(f, (0.1, -0.2), 0.3)
    assert ls.edges is None
    dev = np.abs(f.values[:, ls.members] - np.array([[0.1], [-0.2]]))
    assert np.all(dev.max(axis=0) <= 0.3)
    with pytest.raises(ValueError):
        extract_level_set(f, (0.0, 0.0, 0.0), 0.1)


def test_occupied_counts_monotone(field):
    h = build_voronoi_hierarchy(5, field.grid)
    ls = extract_level_set(field, 0.0, 0.01)
    _, counts = occupied_counts(ls, h)
    assert all(b >= a for a, b in zip(counts, counts[1:]))


@pytest.mark.parametrize("normal", [[0, 0, 1], [0.3, 0.5, 0.8], [0.2, 0.1, 0.9], [0.5, 0.5, 0.7]])
def test_great_circle_dimension(fine, normal):
    n = np.asarray(normal, dtype=float)
    n /= np.linalg.norm(n)
    f = FieldSample(fine.grid, fine.grid.xyz @ n)
    fit = box_dimension(extract_level_set(f, 0.0, 1e-9), fine)
    assert fit.slope == pytest.approx(1.0, abs=0.05)
    assert len(fit.used) >= 3


def test_full_sphere_dimension(fine):
    f = FieldSample(fine.grid, np.zeros(fine.grid.size))
    fit = box_dimension(extract_level_set(f, 0.0, 1.0), fine)
    assert fit.slope == pytest.approx(2.0, abs=0.05)


def test_box_dimension_needs_data(fine):
    f = FieldSample(fine.grid, fine.grid.xyz[:, 2])
    with pytest.raises(ValueError):
        box_dimension(extract_level_set(f, 5.0, 0.1), fine)
    with pytest.raises(ValueError):
        box_dimension(extract_level_set(f, 0.0, 1e-9), fine, levels=[1, 2])


def test_premeasure(field):
    h = build_voronoi_hierarchy(5, field.grid)
    g = GaugeFunction(2.5, 1)
    empty = extract_level_set(field, 50.0, 0.01)
    assert phi_premeasure(empty, h, 3, g) == 0.0
    ls = extract_level_set(field, 0.0, default_tolerance(field, 2.5))
    # the gauge is defined below 1/e, so levels start at 3 (cell diameter 1/4)
    pm = [phi_premeasure(ls, h, k, g) for k in range(3, 6)]
    k_dbl = g.doubling_constant()
    assert all(0 < b <= k_dbl * a for a, b in zip(pm, pm[1:]))
    with pytest.raises(ValueError):
        phi_premeasure(ls, h, 6, g)


def test_oscillation_constant_positive(field):
    k = oscillation_constant(field, 2.5, n_caps=50)
    assert 0 < k < 10
    assert default_tolerance(field, 2.5, k_osc=k) > 0


def test_hitting_indicator():
    grid = EquiangularGrid(32, 64)
    f = FieldSample(grid, grid.xyz[:, 2])
    north = Cap(SpherePoint(0.0, 0.0), 0.3)
    equator_cap = Cap(SpherePoint(math.pi / 2, 1.0), 0.3)
    assert hitting_indicator(f, 0.0, equator_cap, 0.01)
    assert not hitting_indicator(f, 0.0, north, 0.01)
    assert hitting_indicator(f, 0.97, north, 0.05)


def test_restriction_and_csv(field, tmp_path):
    ls = extract_level_set(field, 0.0, 0.01)
    cap = Cap(SpherePoint(1.0, 1.0), 0.5)
    sub = ls.restricted(cap)
    assert np.all(np.isin(sub.members, ls.members)) and sub.size < ls.size
    assert np.all(cap.contains(sub.points()))
    sub.to_csv(tmp_path / "ls.csv")
    assert len((tmp_path / "ls.csv").read_text().splitlines()) == sub.size + 1
