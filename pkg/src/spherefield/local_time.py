"""
Occupation measures and local times of sampled fields.

Local times are computed with the counting estimator: the occupation
measure of a sup-norm ball of half-width ``eps`` around the level, divided
by the ball volume ``(2 eps)^d``.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .covariance import rho_alpha
from .geometry import Cap, PolarCapGrid, SpherePoint
from .spectrum import PowerSpectrum
from .synthesis import FieldSample, band_split, replicate_seed

INV_E = math.exp(-1.0)
RADIUS_RATIO = 0.8


# ---------------------------------------------------------------------------
# gauge functions

def _loglog(r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= INV_E):
        raise ValueError("gauge functions are defined for 0 < r < 1/e")
    return np.log(np.abs(np.log(r)))


def w(r, alpha):
    """rho_alpha(r / sqrt(log|log r|))."""
    out = rho_alpha(np.asarray(r, dtype=float) / np.sqrt(_loglog(r)), alpha)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GaugeFunction:
    """The gauge r^2 / w(r)^d for a d-component field with exponent alpha."""

    alpha: float
    d: int

    def __post_init__(self):
        if self.alpha <= 2:
            raise ValueError("alpha must exceed 2")
        if int(self.d) < 1:
            raise ValueError("d must be at least 1")

    def w(self, r):
        return w(r, self.alpha)

    def __call__(self, r):
        return phi(r, self)

    def doubling_constant(self, r_max=0.1, n=200):
        """max phi(2r)/phi(r) over a grid of r with 2r < r_max."""
        r = np.geomspace(1e-12, 0.5 * r_max, n)
        return float(np.max(phi(2 * r, self) / phi(r, self)))


def phi(r, g: GaugeFunction):
    """r^2 / w(r)^d."""
    r = np.asarray(r, dtype=float)
    out = r ** 2 / np.asarray(w(r, g.alpha)) ** g.d
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# occupation measure and local time

def _region_mask(f: FieldSample, region):
    if region is None:
        return None
    mask = region.contains(f.grid.xyz)
    if not mask.any():
        raise ValueError("region holds no grid point")
    return mask


def _in_box(values, lo, hi):
    return np.all((values >= lo[:, None]) & (values <= hi[:, None]), axis=0)


def _as_level(t, d):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size == 1 and d > 1:
        t = np.full(d, float(t[0]))
    if t.size != d:
        raise ValueError(f"level has {t.size} entries, field has {d} components")
    return t


def occupation_measure(f: FieldSample, region, box) -> float:
    """
    Area of the set of region points whose value lies in the closed box.

    Parameters
    ----------
    region : Cap or None
        None means the whole sphere.
    box : (lo, hi)
        Lower and upper corners, each a d-vector or scalar.
    """
    lo = _as_level(box[0], f.d)
    hi = _as_level(box[1], f.d)
    mask = _region_mask(f, region)
    hit = _in_box(f.values, lo, hi)
    wts = f.grid.weights
    if mask is not None:
        hit &= mask
    return float(np.sum(wts[hit]))


def resolution_scale(f: FieldSample, stride=97):
    """Median absolute step of the first component between grid neighbours."""
    if not hasattr(f.grid, "edges"):
        return 0.0
    a, b = f.grid.edges()
    a, b = a[::stride], b[::stride]
    return float(np.median(np.abs(f.values[0, a] - f.values[0, b])))


@dataclass(frozen=True)
class LocalTimeEstimate:
    t: tuple
    region: object
    eps: float
    value: float
    resolution: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def local_time_estimate(f: FieldSample, t, region, eps, warn=True) -> LocalTimeEstimate:
    """Counting estimator (2 eps)^-d * occupation of the eps-ball around ``t``."""
    eps = float(eps)
    if eps <= 0:
        raise ValueError("bandwidth must be positive")
    t = _as_level(t, f.d)
    if warn:
        res = resolution_scale(f)
        if eps < res:
            warnings.warn("bandwidth below the field's typical grid step; "
                          "the counting estimate is noisy", RuntimeWarning, stacklevel=2)
    occ = occupation_measure(f, region, (t - eps, t + eps))
    val = occ / (2.0 * eps) ** f.d
    return LocalTimeEstimate(tuple(t.tolist()), region, eps, val, f.grid.describe())


def default_bandwidth(alpha, spacing):
    """4 w(h) at grid spacing h."""
    return 4.0 * w(spacing, alpha)


def local_time_integral(f: FieldSample, region, eps, per_eps=2, margin=1.0):
    """
    Riemann sum of L(t, region) over a cubic t-grid covering the field range.

    The t-grid step is ``2 eps / per_eps``; each node's value is a counting
    estimate evaluated on the same sample.
    """
    eps = float(eps)
    step = 2.0 * eps / per_eps
    mask = _region_mask(f, region)
    vals = f.values if mask is None else f.values[:, mask]
    wts = f.grid.weights if mask is None else f.grid.weights[mask]
    lo = vals.min(axis=1) - eps - margin * step
    hi = vals.max(axis=1) + eps + margin * step
    axes = [np.arange(lo[j], hi[j] + step, step) for j in range(f.d)]
    # a point sits in the box around node (t_1, t_2) iff it sits in both
    # per-axis windows, so node occupations are weighted products of indicators
    ind = [(np.abs(vals[j][None, :] - axes[j][:, None]) <= eps).astype(float) for j in range(f.d)]
    if f.d == 1:
        total = (ind[0] @ wts).sum()
    elif f.d == 2:
        total = np.einsum("ap,p,bp->", ind[0], wts, ind[1])
    else:
        raise NotImplementedError("t-grid integration is implemented for d <= 2")
    return float(total * step ** f.d / (2.0 * eps) ** f.d)


def upper_density_profile(f: FieldSample, t, x: SpherePoint, radii, eps, g: GaugeFunction):
    """
    L(t, D(x, r)) / phi(r) along a decreasing radius schedule.

    Returns
    -------
    dict
        ``radii``, ``ratios`` and their ``running_max`` (the limsup proxy).
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    h = f.grid.spacing
    if np.isfinite(h) and radii.min() < h:
        raise ValueError(f"radius {radii.min():.3g} below grid spacing {h:.3g}")
    if radii.max() >= INV_E:
        raise ValueError("radii must stay below 1/e")
    ratios = np.array([local_time_estimate(f, t, Cap(x, r), eps, warn=False).value / phi(r, g)
                       for r in radii])
    return {"radii": radii, "ratios": ratios, "running_max": np.maximum.accumulate(ratios)}


def radius_schedule(r_max, r_min, ratio=RADIUS_RATIO):
    """Geometric schedule r_max, ratio r_max, ... down to r_min."""
    n = int(math.floor(math.log(r_min / r_max) / math.log(ratio))) + 1
    return r_max * ratio ** np.arange(max(n, 1))


# ---------------------------------------------------------------------------
# band approximation of local time

def lt_error_exponent(alpha, d):
    """kappa = min{2, (4 - d(alpha - 2)) / (alpha - 2)}."""
    return min(2.0, (4.0 - d * (alpha - 2.0)) / (alpha - 2.0))


def lt_error_scale(alpha, d, b, beta, r):
    """B^(-kappa beta (4 - alpha)) r^(4 - d(alpha - 2))."""
    k = lt_error_exponent(alpha, d)
    return b ** (-k * beta * (4.0 - alpha)) * r ** (4.0 - d * (alpha - 2.0))


@dataclass(frozen=True)
class LocalTimeErrorStats:
    second_moment: float
    stderr: float
    replicates: int
    errors: np.ndarray = field(repr=False)
    band: tuple = (0, 0)
    eps: float = 0.0
    reference: float = float("nan")

    @property
    def fitted_constant(self):
        return self.second_moment / self.reference


def band_local_time_error_mc(s: PowerSpectrum, d, cap: Cap, low, high, replicates, eps,
                             n_theta=None, seed=0, reference=float("nan"), threads=1):
    """
    Second moment of L(T(x), D) - L^{L,U}(T^{L,U}(x), D) over replicates.

    The cap is rotated to the north pole (the law is isotropic) and only the
    grid rows inside it are synthesised. ``x`` is the grid point nearest the
    cap center, and each field is measured at its own value there.
    """
    replicates = int(replicates)
    if replicates < 30:
        raise ValueError("need at least 30 replicates")
    if n_theta is None:
        n_theta = s.l_max + 1
    grid = PolarCapGrid(n_theta, 2 * n_theta, cap.radius)
    region = Cap(SpherePoint(0.0, 0.0), cap.radius)
    errs = np.empty(replicates)
    for i in range(replicates):
        split = band_split(s, low, high, grid, replicate_seed(seed, i), d=d, threads=threads)
        full = split.full
        lt_full = local_time_estimate(full, full.values[:, 0], region, eps, warn=False).value
        lt_band = local_time_estimate(split.main, split.main.values[:, 0], region, eps,
                                      warn=False).value
        errs[i] = lt_full - lt_band
    sq = errs ** 2
    return LocalTimeErrorStats(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(replicates)),
                               replicates, errs, (int(low), int(high)), float(eps), reference)


def expected_local_time(t, area, d=1):
    """Mean local time of a unit-variance field: standard normal density at t times area."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return float((2 * math.pi) ** (-d / 2) * math.exp(-0.5 * float(t @ t)) * area)

