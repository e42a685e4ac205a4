"""
Isotropic covariance, variogram and Gaussian conditioning for a spectrum.

When the spectrum carries a power-law tail (``C_l ~ C_L (L / l)**alpha`` past
the stored degree L), the missing degrees are added back in continuum form
using ``P_l(cos t) ~ sqrt(t / sin t) J_0((l + 1/2) t)``. This keeps the small
angle behaviour ``variogram ~ t**(alpha - 2)`` down to arbitrarily small t,
which a truncated sum cannot reproduce below ``t ~ 1 / L``.
"""
import csv
import math
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, linalg, special

from . import kernels
from .geometry import SpherePoint, angles_to
from .spectrum import PowerSpectrum, power_tail_mass

DELTA0 = 0.1


def rho_alpha(r, alpha):
    """Scale function r**((alpha - 2) / 2)."""
    alpha = float(alpha)
    if alpha <= 2:
        raise ValueError("alpha must exceed 2")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    out = r ** (0.5 * (alpha - 2.0))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Continuum tail: G(a) = int_a^inf s**mu (1 - J0(s)) ds with mu = 1 - alpha


def _g_zero(mu):
    """int_0^inf s**mu (1 - J0(s)) ds for -3 < mu < -1."""
    return -(2.0 ** mu) * special.gamma(0.5 * (1 + mu)) / special.gamma(0.5 * (1 - mu))


_SERIES = (1 / 4, -1 / 64, 1 / 2304, -1 / 147456, 1 / 14745600)


def _j_small(a, mu):
    """int_0^a s**mu (1 - J0(s)) ds from the power series of 1 - J0 (a <= 0.1)."""
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    for k, c in enumerate(_SERIES, start=1):
        p = mu + 2 * k + 1
        out += c * a ** p / p
    return out


_A_LO, _A_HI = 0.1, 60.0


@lru_cache(maxsize=32)
def _g_spline(mu):
    """Cubic spline of log G on log a over [0.1, 60]."""
    nodes = np.geomspace(_A_LO, _A_HI, 700)
    f = lambda s: s ** mu * (1.0 - special.j0(s))
    pieces = [integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13)[0]
              for lo, hi in zip(nodes[:-1], nodes[1:])]
    cum = np.concatenate(([0.0], np.cumsum(pieces)))
    g = _g_zero(mu) - float(_j_small(_A_LO, mu)) - cum
    return interpolate.CubicSpline(np.log(nodes), np.log(g))


def _g_large(a, mu):
    """G(a) for a > 60 from the large-argument form of J0."""
    nu = mu - 0.5
    ph = a - 0.25 * math.pi
    i_osc = math.sqrt(2.0 / math.pi) * (-a ** nu * np.sin(ph) + (0.125 - nu) * a ** (nu - 1) * np.cos(ph))
    return a ** (mu + 1) / (-mu - 1) - i_osc


def tail_integral(a, alpha):
    """G(a) = int_a^inf s**(1 - alpha) (1 - J0(s)) ds, vectorised in a >= 0."""
    mu = 1.0 - float(alpha)
    if not (-3.0 < mu < -1.0):
        raise ValueError("tail continuum needs 2 < alpha < 4")
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    small = a <= _A_LO
    large = a > _A_HI
    mid = ~(small | large)
    out[small] = _g_zero(mu) - _j_small(a[small], mu)
    if mid.any():
        out[mid] = np.exp(_g_spline(round(mu, 12))(np.log(a[mid])))
    if large.any():
        out[large] = _g_large(a[large], mu)
    return out


class CovarianceModel:
    """
    Covariance of the isotropic field with a given spectrum.

    Parameters
    ----------
    spectrum : PowerSpectrum
    tail : bool or None
        Add the continuum power-law tail beyond l_max. ``None`` follows
        ``spectrum.tail == "power"`` (only possible for 2 < alpha < 4).
    """

    def __init__(self, spectrum: PowerSpectrum, tail=None):
        self.spectrum = spectrum
        if tail is None:
            tail = spectrum.tail == "power" and 2.0 < spectrum.alpha < 4.0
        self.tail = bool(tail)
        if self.tail and not (2.0 < spectrum.alpha < 4.0):
            raise ValueError("tail continuum needs 2 < alpha < 4")
        self.alpha = float(spectrum.alpha)
        self.l_max = spectrum.l_max
        w = spectrum.weights.copy()
        self._weights = w
        self._gap_coef = w.copy()
        self._gap_coef[0] = 0.0
        head = float(math.fsum(w))
        if self.tail:
            big_l = self.l_max
            self.tail_amplitude = spectrum.values[big_l] * big_l ** self.alpha / (4.0 * math.pi)
            self.tail_mass = 2.0 * self.tail_amplitude * (big_l + 1.0) ** (2.0 - self.alpha) / (self.alpha - 2.0)
            self.scale = 1.0 / (head + self.tail_mass)
        else:
            self.tail_amplitude = 0.0
            self.tail_mass = 0.0
            self.scale = 1.0
        self.variance = self.scale * (head + self.tail_mass)

    def describe(self):
        return {"alpha": self.alpha, "l_max": self.l_max, "tail": self.tail,
                "provenance": self.spectrum.provenance}

    def _tail_gap(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        pos = theta > 0
        t = theta[pos]
        a = (self.l_max + 1.0) * t
        mu = 1.0 - self.alpha
        mass_part = a ** (mu + 1) / (-mu - 1)
        near = t <= 1.0
        c = np.ones_like(t)
        # sqrt(t / sin t) - 1, kept accurate for tiny t
        with np.errstate(invalid="ignore", divide="ignore"):
            one_minus_c = -np.expm1(-0.5 * np.log(np.sinc(t / math.pi)))
        one_minus_c = np.where(near, one_minus_c, 0.0)
        c = 1.0 - one_minus_c
        g = np.where(near, tail_integral(np.where(near, a, 1.0), self.alpha), mass_part)
        inner = np.where(near, one_minus_c * mass_part + c * g, mass_part)
        out[pos] = 2.0 * self.tail_amplitude * t ** (self.alpha - 2.0) * inner
        return out

    def gap(self, theta):
        """sum_l (2l+1)/(4pi) C_l (1 - P_l(cos theta)), scaled, including the tail."""
        th = np.asarray(theta, dtype=float)
        out = kernels.legendre_gap_series(self._gap_coef, th)
        if self.tail:
            out = out + self._tail_gap(th)
        return self.scale * out

    def covariance(self, theta):
        """E[T(x) T(y)] at geodesic separation ``theta``."""
        th = np.asarray(theta, dtype=float)
        if np.any((th < 0) | (th > math.pi + 1e-12)):
            raise ValueError("theta outside [0, pi]")
        if self.tail:
            out = self.variance - self.gap(th)
        else:
            out = kernels.legendre_series(self._weights, np.cos(th))
        return float(out) if np.ndim(theta) == 0 else out

    def variogram(self, theta):
        """E|T(x) - T(y)|^2, computed without cancellation at small theta."""
        th = np.asarray(theta, dtype=float)
        if np.any((th < 0) | (th > math.pi + 1e-12)):
            raise ValueError("theta outside [0, pi]")
        out = 2.0 * self.gap(th)
        return float(out) if np.ndim(theta) == 0 else out

    def correlation_gap(self, theta):
        """1 - corr(theta), with corr = cov(theta) / cov(0)."""
        out = self.gap(np.asarray(theta, dtype=float)) / self.variance
        return float(out) if np.ndim(theta) == 0 else out

    def one_minus_corr_sq(self, theta):
        """1 - corr(theta)^2 = g (2 - g) with g = 1 - corr, free of cancellation."""
        g = np.asarray(self.correlation_gap(theta), dtype=float)
        out = g * (2.0 - g)
        return float(out) if out.ndim == 0 else out

    def remainder_bound(self):
        """Bound on |covariance error| from degrees past l_max that the model omits."""
        s = self.spectrum
        if self.tail or s.tail != "power":
            return 0.0
        return 0.5 * power_tail_mass(s.k0, s.alpha, s.l_max + 1)

    def covariance_matrix(self, xyz):
        xyz = np.asarray(xyz, dtype=float)
        dots = np.clip(xyz @ xyz.T, -1.0, 1.0)
        cross = np.linalg.norm(np.cross(xyz[:, None, :], xyz[None, :, :]), axis=-1)
        ang = np.arctan2(cross, dots)
        return self.covariance(ang)

    def export_table(self, thetas, path, kind="variogram"):
        """CSV with columns theta, value, tail_bound."""
        thetas = np.asarray(thetas, dtype=float)
        vals = self.variogram(thetas) if kind == "variogram" else self.covariance(thetas)
        bound = self.remainder_bound() * (2.0 if kind == "variogram" else 1.0)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "value", "tail_bound"])
            for t, v in zip(np.atleast_1d(thetas), np.atleast_1d(vals)):
                w.writerow([repr(float(t)), repr(float(v)), repr(float(bound))])


def covariance(model: CovarianceModel, theta):
    return model.covariance(theta)


def variogram(model: CovarianceModel, theta):
    return model.variogram(theta)


class ConditioningResult(float):
    """A float carrying the ridge that had to be added, if any."""

    ridge = 0.0

    def __new__(cls, value, ridge=0.0):
        obj = super().__new__(cls, value)
        obj.ridge = ridge
        return obj


def _as_xyz(p):
    return p.xyz if isinstance(p, SpherePoint) else np.asarray(p, dtype=float)


def conditional_variance(model: CovarianceModel, x, conditioners, ridge=1e-12):
    """
    Var(T(x) | T(x_1), ..., T(x_n)) by a Schur complement.

    The conditioning block is factorised by Cholesky; if that fails, ``ridge``
    is added to its diagonal and the returned value records it in ``.ridge``.
    """
    x0 = _as_xyz(x)
    pts = np.array([_as_xyz(p) for p in conditioners], dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        return ConditioningResult(model.variance)
    k = model.covariance(angles_to(pts, x0))
    kk = model.covariance_matrix(pts)
    used = 0.0
    try:
        chol = linalg.cho_factor(kk, lower=True)
    except linalg.LinAlgError:
        used = ridge
        chol = linalg.cho_factor(kk + ridge * np.eye(kk.shape[0]), lower=True)
    sol = linalg.cho_solve(chol, k)
    val = model.variance - float(k @ sol)
    return ConditioningResult(min(model.variance, max(0.0, val)), used)


def slnd_ratio(model: CovarianceModel, x, conditioners, ridge=1e-12):
    """conditional_variance / min_k rho_alpha(d(x, x_k))**2."""
    x0 = _as_xyz(x)
    pts = np.array([_as_xyz(p) for p in conditioners], dtype=float).reshape(-1, 3)
    dmin = float(angles_to(pts, x0).min())
    cv = conditional_variance(model, x0, pts, ridge)
    if dmin == 0.0:
        return 0.0
    return float(cv) / rho_alpha(dmin, model.alpha) ** 2


def joint_density_p(model: CovarianceModel, theta, t2):
    """
    Bivariate normal density of (T(x), T(y)) at ``t2`` for d(x, y) = theta.

    Unit variances and correlation cov(theta) / cov(0).
    """
    theta = float(theta)
    if not (0.0 < theta <= math.pi):
        raise ValueError("theta must lie in (0, pi]")
    t1, t2b = (float(v) for v in t2)
    g = model.correlation_gap(theta)
    det = g * (2.0 - g)
    if det <= 0:
        raise ValueError("covariance matrix is singular at this separation")
    rho = 1.0 - g
    q = (t1 * t1 - 2.0 * rho * t1 * t2b + t2b * t2b) / det
    return math.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(det))


def density_at_diagonal(model: CovarianceModel, theta, a):
    """p(theta; (a, a)), vectorised over theta."""
    g = np.asarray(model.correlation_gap(theta), dtype=float)
    det = g * (2.0 - g)
    rho = 1.0 - g
    return np.exp(-float(a) ** 2 / (1.0 + rho)) / (2.0 * math.pi * np.sqrt(det))
