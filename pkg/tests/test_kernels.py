import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spherefield import kernels
from spherefield.geometry import NORTH, SOUTH, EquiangularGrid

py = kernels.python_backend
cy = kernels.compiled_backend
needs_cy = pytest.mark.skipif(cy is None, reason="compiled backend not built")

seeds = st.integers(0, 2 ** 32 - 1)


@needs_cy
@given(seeds, st.integers(0, 400), st.integers(1, 50))
def test_legendre_series_equivalent(seed, l_max, n):
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(l_max + 1)
    x = rng.uniform(-1, 1, n)
    assert np.array_equal(py.legendre_series(coef, x), cy.legendre_series(coef, x))
    th = rng.uniform(0, math.pi, n)
    assert np.array_equal(py.legendre_gap_series(coef, th), cy.legendre_gap_series(coef, th))


@needs_cy
@settings(max_examples=30)
@given(seeds, st.integers(0, 80), st.integers(1, 8))
def test_alm_rows_equivalent(seed, l_max, n):
    rng = np.random.default_rng(seed)
    alm = rng.standard_normal((l_max + 1, l_max + 1)) + 1j * rng.standard_normal((l_max + 1, l_max + 1))
    lo = int(rng.integers(0, l_max + 1))
    rows = rng.uniform(1e-3, math.pi - 1e-3, n)
    a = py.alm_rows(alm, lo, l_max, rows)
    b = cy.alm_rows(alm, lo, l_max, rows)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(a).max())


@needs_cy
@given(seeds, st.integers(2, 300), st.integers(1, 4))
def test_max_pairwise_equivalent(seed, n, d):
    rng = np.random.default_rng(seed)
    v = np.ascontiguousarray(rng.standard_normal((n, d)))
    ref = max(np.linalg.norm(v[i] - v[j]) for i in range(n) for j in range(i + 1, n)) \
        if n <= 40 else py.max_pairwise_distance(v)
    assert py.max_pairwise_distance(v) == pytest.approx(ref, rel=1e-12)
    assert cy.max_pairwise_distance(v) == pytest.approx(ref, rel=1e-12)
    assert kernels.max_pairwise_distance(v) == pytest.approx(ref, rel=1e-12)


@needs_cy
@settings(max_examples=15)
@given(st.floats(0.05, 0.5))
def test_fps_pack_identical(sep):
    g = EquiangularGrid(48, 96)
    xyz = np.ascontiguousarray(g.xyz)
    labels = np.where(xyz[:, 2] >= 0.0, 0, 1).astype(np.int64)
    order = np.argsort(labels, kind="stable").astype(np.int64)
    offsets = np.array([0, (labels == 0).sum(), labels.size], dtype=np.int64)
    parents = np.array([NORTH.xyz, SOUTH.xyz])
    a = py.fps_pack(xyz, order, offsets, parents, math.cos(sep))
    b = cy.fps_pack(xyz, order, offsets, parents, math.cos(sep))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_scalar_shapes():
    out = kernels.legendre_series(np.array([0.0, 0.0, 1.0]), 0.5)
    assert np.ndim(out) == 0 and float(out) == pytest.approx(-0.125)
    assert kernels.legendre_gap_series(np.array([0.0, 1.0]), np.zeros((2, 3))).shape == (2, 3)


SCRIPT = """
import json, numpy as np
from spherefield import kernels, BACKEND
from spherefield.geometry import EquiangularGrid, build_voronoi_hierarchy
h = build_voronoi_hierarchy(3, EquiangularGrid(64, 128))
print(json.dumps({"backend": BACKEND, "counts": h.cell_counts(),
                  "p": float(kernels.legendre_series(np.ones(50), 0.3))}))
"""


def _run(env_extra):
    env = dict(os.environ, **env_extra)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(out.stdout)


def test_forced_fallback_matches_default():
    pure = _run({"SPHEREFIELD_PURE_PYTHON": "1"})
    assert pure["backend"] == "python"
    default = _run({"SPHEREFIELD_PURE_PYTHON": "0"})
    assert default["backend"] == ("cython" if cy is not None else "python")
    assert pure["counts"] == default["counts"]
    assert pure["p"] == default["p"]
