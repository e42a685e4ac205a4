"""
Level sets at grid resolution, box-counting dimension and gauge premeasures.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .geometry import Cap, EquiangularGrid, SpherePoint, random_points
from .local_time import GaugeFunction, phi, w
from .synthesis import FieldSample

MIN_COUNT = 10
SATURATION = 0.5


@dataclass(frozen=True)
class LevelSetEstimate:
    """
    Grid points on a level set.

    ``members`` are flat grid indices. ``edges`` lists the neighbour pairs whose
    values straddle the level (one-component fields only); each such edge is
    represented in ``members`` by its endpoint closer to the level.
    """

    t: tuple
    eps: float
    members: np.ndarray
    grid: object = field(repr=False)
    edges: np.ndarray = field(default=None, repr=False)
    provenance: dict = field(default_factory=dict)

    @property
    def size(self):
        return int(self.members.size)

    @property
    def empty(self):
        return self.members.size == 0

    def points(self):
        return self.grid.xyz[self.members]

    def cells(self, h, k):
        """Indices of the level-k cells holding at least one member."""
        return np.unique(h.level(k).labels[self.members])

    def restricted(self, cap: Cap):
        keep = cap.contains(self.grid.xyz[self.members])
        return LevelSetEstimate(self.t, self.eps, self.members[keep], self.grid, None,
                                dict(self.provenance))

    def to_csv(self, path):
        xyz = self.points()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "x", "y", "z"])
            for i, p in zip(self.members, xyz):
                wr.writerow([int(i)] + [repr(float(v)) for v in p])


def _sign_change_members(values, grid, t):
    a, b = grid.edges()
    da = values[a] - t
    db = values[b] - t
    cross = (da * db <= 0.0) & ~((da == 0.0) & (db == 0.0))
    a, b = a[cross], b[cross]
    pick = np.where(np.abs(da[cross]) <= np.abs(db[cross]), a, b)
    return pick, np.column_stack([a, b])


def extract_level_set(f: FieldSample, t, eps, region: Cap = None) -> LevelSetEstimate:
    """
    Grid points with |T(x) - t|_inf <= eps.

    For one-component fields on an equiangular grid, every neighbour pair whose
    values straddle ``t`` also contributes its endpoint nearer to ``t``, so a
    crossing between samples is never missed.
    """
    eps = float(eps)
    if eps <= 0:
        raise ValueError("tolerance must be positive")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size == 1 and f.d > 1:
        t = np.full(f.d, float(t[0]))
    if t.size != f.d:
        raise ValueError("level dimension does not match the field")
    near = np.all(np.abs(f.values - t[:, None]) <= eps, axis=0)
    members = np.flatnonzero(near)
    edges = None
    if f.d == 1 and hasattr(f.grid, "edges"):
        extra, edges = _sign_change_members(f.values[0], f.grid, t[0])
        members = np.union1d(members, extra)
    if region is not None:
        keep = region.contains(f.grid.xyz[members])
        members = members[keep]
        if edges is not None:
            edges = edges[region.contains(f.grid.xyz[edges[:, 0]])
                          | region.contains(f.grid.xyz[edges[:, 1]])]
    prov = {"seed": f.seed, "band": list(f.band), "grid": f.grid.describe()}
    return LevelSetEstimate(tuple(t.tolist()), eps, members.astype(np.int64), f.grid, edges, prov)


def hitting_indicator(f: FieldSample, t, cap: Cap, eps) -> bool:
    """Whether the eps-level set meets the cap."""
    return not extract_level_set(f, t, eps, region=cap).empty


# ---------------------------------------------------------------------------
# tolerance matched to the grid

def _cap_indices(grid, cap: Cap):
    """Flat indices of grid points inside the cap, scanning only nearby rows."""
    if isinstance(grid, EquiangularGrid):
        th0 = cap.center.colatitude
        rows = np.flatnonzero(np.abs(grid.theta - th0) <= cap.radius)
        idx = (rows[:, None] * grid.n_phi + np.arange(grid.n_phi)[None, :]).ravel()
    else:
        idx = np.arange(grid.size)
    return idx[cap.contains(grid.xyz[idx])]


def oscillation_constant(f: FieldSample, alpha, radius=None, n_caps=200, seed=0):
    """
    Median over random caps of radius ``radius`` (default: grid spacing) of
    oscillation / w(radius).
    """
    h = f.grid.spacing if radius is None else float(radius)
    rng = np.random.default_rng(seed)
    ratios = []
    for p in random_points(n_caps, rng):
        idx = _cap_indices(f.grid, Cap(SpherePoint.from_vector(p), h))
        if idx.size < 2:
            continue
        osc = kernels.max_pairwise_distance(np.ascontiguousarray(f.values[:, idx].T))
        ratios.append(osc / w(h, alpha))
    if not ratios:
        raise ValueError("caps too small for this grid")
    return float(np.median(ratios))


def default_tolerance(f: FieldSample, alpha, k_osc=None):
    """2 K_osc w(h) at grid spacing h."""
    h = f.grid.spacing
    if k_osc is None:
        k_osc = oscillation_constant(f, alpha)
    return 2.0 * k_osc * w(h, alpha)


# ---------------------------------------------------------------------------
# box counting

@dataclass(frozen=True)
class DimensionFit:
    slope: float
    stderr: float
    ci: tuple
    levels: list
    counts: list
    used: list
    residuals: list

    def to_json(self):
        return json.dumps({"slope": self.slope, "stderr": self.stderr, "ci": list(self.ci),
                           "levels": self.levels, "counts": self.counts, "used": self.used,
                           "residuals": self.residuals})


def occupied_counts(ls: LevelSetEstimate, h, levels=None):
    levels = list(range(1, h.k_max + 1)) if levels is None else list(levels)
    return levels, [int(ls.cells(h, k).size) for k in levels]


def box_dimension(ls: LevelSetEstimate, h, levels=None) -> DimensionFit:
    """
    Least-squares slope of log(occupied cells) against log(1 / cell size).

    The cell size at level k is the hierarchy's mean cell radius
    sqrt(4 pi / M_k), M_k the number of level-k cells. It tracks 2^-k up to a
    packing constant that drifts from level to level, and using it makes the
    whole sphere fit at slope 2 exactly.

    Only levels whose occupied count lies in [10, 0.5 * number of member
    points] enter the fit: below the first bound the cells are too coarse,
    above the second every cell holds about one member and the count
    measures the grid instead of the set.
    """
    if ls.empty:
        raise ValueError("empty level set")
    levels, counts = occupied_counts(ls, h, levels)
    n = ls.size
    used = [k for k, c in zip(levels, counts) if MIN_COUNT <= c <= SATURATION * n]
    if len(used) < 3:
        raise ValueError(f"only {len(used)} levels inside the fit window; need 3")
    x = np.array([0.5 * math.log(h.level(k).n_cells / (4.0 * math.pi)) for k in used])
    y = np.log([counts[levels.index(k)] for k in used])
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    q = stats.t.ppf(0.975, len(used) - 2)
    ci = (fit.slope - q * fit.stderr, fit.slope + q * fit.stderr)
    return DimensionFit(float(fit.slope), float(fit.stderr), tuple(map(float, ci)), levels,
                        counts, used, resid.tolist())


def phi_premeasure(ls: LevelSetEstimate, h, k, g: GaugeFunction) -> float:
    """Occupied level-k cells times phi(2^(1-k))."""
    if not (1 <= k <= h.k_max):
        raise ValueError(f"level {k} outside 1..{h.k_max}")
    if ls.empty:
        return 0.0
    return ls.cells(h, k).size * phi(2.0 ** (1 - k), g)
