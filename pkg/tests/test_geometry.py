import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from conftest import haversine
from spherefield.geometry import (NORTH, SOUTH, Cap, EquiangularGrid, PointSet, PolarCapGrid,
                                  SpherePoint, angles_to, build_voronoi_hierarchy, cap_area,
                                  covering_number, geodesic_distance, random_rotation)

colat = st.floats(0.0, math.pi)
lon = st.floats(0.0, 2 * math.pi, exclude_max=True)
points = st.builds(SpherePoint, colat, lon)


def test_distance_identity_and_antipodes():
    assert geodesic_distance(NORTH, NORTH) == 0.0
    assert geodesic_distance(NORTH, SOUTH) == pytest.approx(math.pi, abs=1e-15)
    x = SpherePoint.from_vector([1, 0, 0])
    y = SpherePoint.from_vector([0, 1, 0])
    assert geodesic_distance(x, y) == pytest.approx(math.pi / 2, abs=1e-15)


@given(points, points)
def test_distance_matches_haversine(p, q):
    ref = haversine((p.colatitude, p.longitude), (q.colatitude, q.longitude))
    assert geodesic_distance(p, q) == pytest.approx(ref, abs=1e-7)


@given(points, points, points)
def test_distance_is_a_metric(p, q, r):
    d = geodesic_distance
    assert d(p, q) == d(q, p)
    assert 0.0 <= d(p, q) <= math.pi
    assert d(p, r) <= d(p, q) + d(q, r) + 1e-12


def test_point_validation():
    with pytest.raises(ValueError):
        SpherePoint(-0.1, 0.0)
    with pytest.raises(ValueError):
        SpherePoint(0.5, 2 * math.pi)
    with pytest.raises(ValueError):
        SpherePoint.from_vector([0, 0, 0])


def test_cap_area_values():
    assert cap_area(math.pi) == pytest.approx(4 * math.pi, rel=1e-15)
    assert cap_area(math.pi / 2) == pytest.approx(2 * math.pi, rel=1e-15)
    for r in (1e-3, 1e-5, 1e-8):
        assert cap_area(r) == pytest.approx(math.pi * r * r, rel=r * r)
    with pytest.raises(ValueError):
        cap_area(0.0)


@pytest.mark.parametrize("r", [0.05, 0.7, 2.0])
def test_cap_area_against_quadrature(r):
    ref, _ = integrate.dblquad(lambda th, ph: math.sin(th), 0, 2 * math.pi, 0, r)
    assert cap_area(r) == pytest.approx(ref, rel=1e-12)


def test_grid_weights_sum_and_shapes():
    g = EquiangularGrid(32, 64)
    assert g.weights.sum() == pytest.approx(4 * math.pi, rel=1e-14)
    assert g.xyz.shape == (g.size, 3)
    assert np.allclose(np.linalg.norm(g.xyz, axis=1), 1.0)
    a, b = g.edges()
    d = angles_to(g.xyz[a], np.array([0, 0, 1.0]))  # touch the helper
    assert d.shape == a.shape and a.shape == b.shape


def test_polar_cap_grid_rows_match_full_grid():
    full = EquiangularGrid(64, 128)
    cap = PolarCapGrid(64, 128, 0.3)
    n = cap.n_theta
    assert np.array_equal(cap.theta, full.theta[:n])
    assert np.array_equal(cap.xyz, full.xyz[: n * 128])
    assert full.theta[n] > 0.3 >= full.theta[n - 1]
    assert cap.spacing == full.spacing


def test_pointset_default_weights():
    ps = PointSet(np.eye(3))
    assert ps.weights.sum() == pytest.approx(4 * math.pi)
    with pytest.raises(ValueError):
        PointSet([[0, 0, 0]])


@pytest.fixture(scope="module")
def hierarchy():
    return build_voronoi_hierarchy(4, EquiangularGrid(128, 256))


def test_level_one_is_the_poles(hierarchy):
    lv = hierarchy.level(1)
    assert lv.n_cells == 2
    assert np.allclose(lv.centers, [[0, 0, 1], [0, 0, -1]])


def test_cells_partition_and_nest(hierarchy):
    n = hierarchy.grid.size
    for k in range(1, hierarchy.k_max + 1):
        lab = hierarchy.level(k).labels
        assert lab.shape == (n,)
        assert lab.min() >= 0 and lab.max() < hierarchy.level(k).n_cells
    for k in range(2, hierarchy.k_max + 1):
        lv, prev = hierarchy.level(k), hierarchy.level(k - 1)
        # each point's parent cell is the parent of its child cell
        assert np.array_equal(lv.parents[lv.labels], prev.labels)


def test_sibling_separation_and_nearest_assignment(hierarchy):
    xyz = hierarchy.grid.xyz
    for k in range(2, hierarchy.k_max + 1):
        lv = hierarchy.level(k)
        for p in np.unique(lv.parents):
            sib = np.flatnonzero(lv.parents == p)
            if sib.size < 2:
                continue
            c = lv.centers[sib]
            ang = np.arccos(np.clip(c @ c.T, -1, 1))
            np.fill_diagonal(ang, np.inf)
            assert ang.min() >= 2.0 ** -k - 1e-12
            members = np.flatnonzero(np.isin(lv.labels, sib))
            own = np.einsum("ij,ij->i", xyz[members], lv.centers[lv.labels[members]])
            best = (xyz[members] @ c.T).max(axis=1)
            assert np.all(own >= best - 1e-15)


def test_hierarchy_refuses_coarse_grid():
    with pytest.raises(ValueError):
        build_voronoi_hierarchy(6, EquiangularGrid(32, 64))


def test_hierarchy_json_round_trip(hierarchy):
    import json
    d = json.loads(hierarchy.to_json())
    assert d["k_max"] == 4 and len(d["levels"]) == 4
    assert hierarchy.cell_counts() == [len(lv["centers"]) for lv in d["levels"]]


def test_covering_number_examples():
    cap = Cap(SpherePoint(1.0, 1.0), 0.5)
    assert covering_number(cap, 0.5) == 1
    n = covering_number(cap, 0.05)
    assert (0.5 / 0.05) ** 2 <= n <= 16 * (0.5 / 0.05) ** 2
    for eps in (0.4, 0.2, 0.1):
        assert covering_number(cap, eps / 2) <= 8 * covering_number(cap, eps)


@given(st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_covering_number_non_increasing(e1, e2):
    cap = Cap(SpherePoint(0.3, 0.0), 0.5)
    lo, hi = sorted((e1, e2))
    assert covering_number(cap, hi) <= covering_number(cap, lo)


def test_random_rotation_is_orthogonal(rng):
    r = random_rotation(rng)
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(r) == pytest.approx(1.0)
