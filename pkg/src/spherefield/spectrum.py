"""
Angular power spectra: power-law families, the two worked examples, and
partial Legendre sums of the spectrum.

Conventions
-----------
``values[l]`` is C_l for l = 0..l_max. The covariance at angular separation
theta is ``sum_l (2l+1)/(4pi) C_l P_l(cos theta)``.
"""
import csv
import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import special

from . import kernels

PROVENANCES = ("condition-A", "example1", "example2", "custom")


class NotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerSpectrum:
    """
    C_l for l = 0..l_max with its declared regularity.

    Attributes
    ----------
    values : ndarray
        Non-negative C_l, read-only.
    alpha : float
        Declared decay exponent.
    k0 : float
        Bound with ``1/k0 <= l**alpha * C_l <= k0`` for l >= 1 (power-law spectra).
    provenance : str
        One of ``condition-A``, ``example1``, ``example2``, ``custom``.
    normalized : bool
        True when ``sum (2l+1) C_l / (4 pi) == 1``.
    tail : str
        ``"power"`` if the spectrum continues as ``C_l ~ l**-alpha`` past l_max,
        ``"none"`` if it is treated as exactly band-limited.
    """

    values: np.ndarray
    alpha: float
    k0: float = 1.0
    provenance: str = "custom"
    normalized: bool = False
    tail: str = "none"
    note: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("spectrum values must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("spectrum values must be finite and non-negative")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.tail not in ("power", "none"):
            raise ValueError("tail must be 'power' or 'none'")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.provenance == "condition-A":
            if self.alpha <= 2:
                raise ValueError("condition-A spectra need alpha > 2")
            ell = np.arange(1, v.size)
            if np.any(v[1:] <= 0):
                raise ValueError("condition-A spectra need C_l > 0 for l >= 1")
            g = v[1:] * ell.astype(float) ** self.alpha
            tol = 1e-12
            if g.size and (g.max() > self.k0 * (1 + tol) or g.min() < (1 - tol) / self.k0):
                raise ValueError(
                    f"l^alpha C_l spans [{g.min():.4g}, {g.max():.4g}], outside [1/K0, K0] with K0={self.k0}")

    @property
    def l_max(self) -> int:
        return self.values.size - 1

    @property
    def weights(self) -> np.ndarray:
        """(2l+1) C_l / (4 pi), the Legendre coefficients of the covariance."""
        ell = np.arange(self.values.size)
        return (2 * ell + 1) * self.values / (4.0 * math.pi)

    def total_variance(self) -> float:
        return float(math.fsum(self.weights))

    @property
    def is_condition_a(self) -> bool:
        return self.provenance == "condition-A" or (
            self.provenance == "example1" and 2 < self.alpha < 4 and not self.note)

    def digest(self) -> bytes:
        """SHA-256 of the little-endian float64 values."""
        return hashlib.sha256(self.values.astype("<f8").tobytes()).digest()

    def truncated(self, l_max) -> "PowerSpectrum":
        l_max = int(l_max)
        if l_max > self.l_max:
            raise ValueError("cannot extend a spectrum by truncation")
        return replace(self, values=self.values[: l_max + 1], normalized=False)

    def metadata(self) -> dict:
        return {"alpha": self.alpha, "K0": self.k0, "provenance": self.provenance,
                "normalized": self.normalized, "tail": self.tail, "l_max": self.l_max,
                "note": self.note}

    def to_csv(self, path):
        """Write ``ell,C_ell`` rows plus a ``.json`` metadata sidecar."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["ell", "C_ell"])
            for ell, c in enumerate(self.values):
                w.writerow([ell, repr(float(c))])
        with open(_sidecar(path), "w", encoding="utf-8") as fh:
            json.dump(self.metadata(), fh, indent=2)

    @classmethod
    def from_csv(cls, path) -> "PowerSpectrum":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        ells = np.array([int(r["ell"]) for r in rows])
        if not np.array_equal(ells, np.arange(len(ells))):
            raise ValueError("spectrum CSV must list ell = 0, 1, 2, ... in order")
        vals = np.array([float(r["C_ell"]) for r in rows])
        meta = {}
        if os.path.exists(_sidecar(path)):
            with open(_sidecar(path), encoding="utf-8") as fh:
                meta = json.load(fh)
        return cls(vals, alpha=float(meta.get("alpha", float("nan"))),
                   k0=float(meta.get("K0", 1.0)), provenance=meta.get("provenance", "custom"),
                   normalized=bool(meta.get("normalized", False)), tail=meta.get("tail", "none"),
                   note=meta.get("note", ""))


def _sidecar(path):
    root, _ = os.path.splitext(str(path))
    return root + ".json"


def _k0_of(values, alpha):
    ell = np.arange(1, values.size, dtype=float)
    g = values[1:] * ell ** alpha
    return float(max(g.max(), 1.0 / g.min(), 1.0))


def condition_a_spectrum(alpha, g=None, l_max=1024, k0=None) -> PowerSpectrum:
    """
    C_0 = 0 and C_l = l**-alpha * g(l) for 1 <= l <= l_max.

    Parameters
    ----------
    alpha : float
        Exponent, must exceed 2.
    g : callable, float or None
        Modulation G(l); ``None`` means G == 1. Must be positive and bounded.
    l_max : int
    k0 : float, optional
        Declared bound; derived from the sampled G when omitted.
    """
    alpha = float(alpha)
    if not alpha > 2:
        raise ValueError(f"alpha must exceed 2, got {alpha}")
    l_max = int(l_max)
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    ell = np.arange(1, l_max + 1, dtype=float)
    if g is None:
        gv = np.ones_like(ell)
    elif callable(g):
        gv = np.asarray(np.vectorize(g, otypes=[float])(ell), dtype=float)
    else:
        gv = np.full_like(ell, float(g))
    if not np.all(np.isfinite(gv)) or np.any(gv <= 0):
        raise ValueError("modulation G must be finite and positive")
    if k0 is None:
        k0 = float(max(gv.max(), 1.0 / gv.min(), 1.0))
    elif gv.max() > k0 or gv.min() < 1.0 / k0:
        raise ValueError("modulation G leaves [1/K0, K0]")
    vals = np.zeros(l_max + 1)
    vals[1:] = gv * ell ** (-alpha)
    return PowerSpectrum(vals, alpha=alpha, k0=float(k0), provenance="condition-A", tail="power")


def normalize(s: PowerSpectrum) -> PowerSpectrum:
    """Rescale so that sum (2l+1) C_l / (4 pi) = 1 over the stored degrees."""
    total = s.total_variance()
    if not total > 0:
        raise ValueError("cannot normalise an all-zero spectrum")
    if s.normalized and abs(total - 1.0) <= 1e-15:
        return s
    vals = s.values / total
    # one correction pass absorbs the rounding of the division
    vals = vals / math.fsum((2 * np.arange(vals.size) + 1) * vals / (4.0 * math.pi))
    k0 = s.k0
    if s.provenance == "condition-A" or (s.provenance == "example1" and vals.size > 1 and np.all(vals[1:] > 0)):
        k0 = _k0_of(vals, s.alpha)
    return replace(s, values=vals, k0=k0, normalized=True)


def example1_spectrum(h, l_max=1024, odd_terms=False) -> PowerSpectrum:
    """
    Idealised spectrum C_l = l**-(2h+2) of the cap-overlap covariance family.

    With ``odd_terms`` the small corrections
    ``d_{2l+1} = (2l+1)**-2 (2 pi)**-(2l+1)`` are added; even corrections vanish.
    Values of h outside (0, 1/2) are accepted but tagged, since the
    resulting exponent is not in (2, 4).
    """
    h = float(h)
    if h <= 0 or h == 1:
        raise ValueError("h must be positive and different from 1")
    alpha = 2.0 * h + 2.0
    ell = np.arange(1, int(l_max) + 1, dtype=float)
    vals = np.zeros(int(l_max) + 1)
    vals[1:] = ell ** (-alpha)
    if odd_terms:
        vals[1:] += example1_odd_terms(int(l_max))[1:]
    note = "" if h < 0.5 else "alpha outside (2,4): not a condition-A exponent"
    if note:
        warnings.warn(note, stacklevel=2)
    return PowerSpectrum(vals, alpha=alpha, k0=_k0_of(vals, alpha) if l_max >= 1 else 1.0,
                         provenance="example1", tail="power", note=note)


def example1_odd_terms(l_max) -> np.ndarray:
    """d_l for l = 0..l_max: zero at even l, (2j+1)^-2 (2 pi)^-(2j+1) at l = 2j+1."""
    d = np.zeros(int(l_max) + 1)
    odd = np.arange(1, int(l_max) + 1, 2)
    with np.errstate(under="ignore"):
        d[odd] = np.exp(-2.0 * np.log(odd) - odd * math.log(2.0 * math.pi))
    return d


def nonempty_level_set_predicted(alpha, d) -> bool:
    """Hitting criterion 4 - (alpha - 2) d > 0."""
    return 4.0 - (float(alpha) - 2.0) * int(d) > 0


def predicted_dimension(alpha, d) -> float:
    """Dimension 2 - (alpha - 2) d / 2 of a non-empty level set."""
    return 2.0 - (float(alpha) - 2.0) * int(d) / 2.0


# ---------------------------------------------------------------------------
# Double-factorial series of the arc-distance covariance


def _bernoulli_poly(n, x):
    b = special.bernoulli(n)
    return sum(special.comb(n, k) * b[k] * x ** (n - k) for k in range(n + 1))


# Stirling coefficients of lnG(y + 1/2) - lnG(y + 1) + (1/2) ln y in powers of 1/y
_HALF_SHIFT = [(-1) ** (k + 1) * (_bernoulli_poly(k + 1, 0.5) - _bernoulli_poly(k + 1, 1.0)) / (k * (k + 1))
               for k in range(1, 13)]


def _half_shift(y):
    """lnG(y + 1/2) - lnG(y + 1), accurate for all y > 0."""
    y = np.asarray(y, dtype=float)
    small = y < 40.0
    out = np.empty_like(y)
    ys = y[small]
    out[small] = special.gammaln(ys + 0.5) - special.gammaln(ys + 1.0)
    yl = y[~small]
    acc = np.zeros_like(yl)
    for k in range(len(_HALF_SHIFT), 0, -1):
        acc = (acc + _HALF_SHIFT[k - 1]) / yl
    out[~small] = -0.5 * np.log(yl) + acc
    return out


def _log_term(n, ell):
    """
    log of [(2n-1)!!]^2 / ((2n+2l+3)!! (2n-2l)!!), continuous in n.

    With (2k-1)!! = 2^k Gamma(k+1/2)/sqrt(pi) and (2j)!! = 2^j j! this is
    2 lnG(n+1/2) - lnG(n+l+5/2) - lnG(n-l+1) - 2 ln 2 - ln(pi)/2. The
    log-gamma differences are expanded into paired ``log1p`` terms so that
    no large, nearly cancelling log-gammas are formed.
    """
    n = np.atleast_1d(np.asarray(n, dtype=float))
    j = np.arange(ell, dtype=float)
    acc = np.zeros_like(n)
    if ell:
        acc = np.log1p(-ell / (n[:, None] + 0.5 + j[None, :])).sum(axis=1)
    acc = acc - np.log(n + ell + 0.5) - np.log(n + ell + 1.5)
    out = acc + _half_shift(n - ell) - 2.0 * math.log(2.0) - 0.5 * math.log(math.pi)
    return out if out.size > 1 else out[0]


def example2_terms(ell, n_terms) -> np.ndarray:
    """
    First ``n_terms`` series terms for degree ``ell``, starting at n = ell.

    The terms are generated by the ratio
    ``t_{n+1} / t_n = (2n+1)^2 / ((2n+2l+5)(2n-2l+2))`` accumulated in log
    space, so no double factorial is ever formed. The ratio is written as
    ``1 + (4l^2 + 6l - 9 - 10n) / ((2n+2l+5)(2n-2l+2))`` and taken through
    ``log1p`` and summed blockwise (pairwise summation inside numpy).
    """
    ell, n_terms = int(ell), int(n_terms)
    if ell < 0 or n_terms < 1:
        raise ValueError("need ell >= 0 and at least one term")
    n = np.arange(ell, ell + n_terms - 1, dtype=float)
    num = 4.0 * ell * ell + 6.0 * ell - 9.0 - 10.0 * n
    log_ratio = np.log1p(num / ((2 * n + 2 * ell + 5) * (2 * n - 2 * ell + 2)))
    logs = np.empty(n_terms)
    logs[0] = float(_log_term(ell, ell))
    block = 4096
    base = logs[0]
    for start in range(0, n_terms - 1, block):
        chunk = log_ratio[start:start + block]
        logs[start + 1:start + 1 + chunk.size] = base + np.cumsum(chunk)
        base = base + float(np.sum(chunk))
    return np.exp(logs)


def example2_partial_sums(ell, n_terms) -> np.ndarray:
    """Running partial sums of the series; non-decreasing in the term count."""
    return np.cumsum(example2_terms(ell, n_terms))


def _dlog_term(x, ell):
    """d/dx of :func:`_log_term` at a scalar x."""
    j = np.arange(ell, dtype=float)
    acc = float(np.sum(1.0 / (x - ell + 0.5 + j) - 1.0 / (x + 0.5 + j)))
    acc -= 1.0 / (x + ell + 0.5) + 1.0 / (x + ell + 1.5)
    y = x - ell
    return acc + float(special.digamma(y + 0.5) - special.digamma(y + 1.0))


def _em_tail(ell, start):
    """
    Euler-Maclaurin estimate of sum_{n >= start} t_n.

    Integral of the continuous log-term from ``start`` (taken in log x, where
    the integrand decays exponentially) plus the endpoint half-term and the
    first derivative correction.
    """
    # piecewise Gauss-Legendre in s = log(x / start); the integrand is smooth there
    nodes, wts = np.polynomial.legendre.leggauss(40)
    edges = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 120.0])
    lo, hi = edges[:-1, None], edges[1:, None]
    s = (0.5 * (hi - lo) * nodes[None, :] + 0.5 * (hi + lo)).ravel()
    w = (0.5 * (hi - lo) * wts[None, :]).ravel()
    x = start * np.exp(s)
    integral = float(np.sum(w * np.exp(_log_term(x, ell)) * x))
    f0 = math.exp(float(_log_term(start, ell)))
    df0 = f0 * float(_dlog_term(start, ell))
    return integral + 0.5 * f0 - df0 / 12.0


def example2_spectrum(ell, truncation=1 << 22, rtol=1e-12) -> float:
    """
    Series value for degree ``ell`` (``ell >= 2`` in the intended use).

    The terms decay only like n**-2.5, so the plain partial sums cannot meet
    a 1e-15 relative stopping rule at any practical length. The explicit sum
    over N terms is completed with an Euler-Maclaurin tail and N is doubled
    until two successive completed sums agree to ``rtol``. ``truncation``
    caps N; exceeding it raises :class:`NotConvergedError`.
    """
    ell = int(ell)
    if ell < 0:
        raise ValueError("ell must be non-negative")
    n = max(256, 16 * ell)
    prev = None
    while n <= truncation:
        terms = example2_terms(ell, n)
        est = float(np.sum(terms)) + _em_tail(ell, ell + n)
        if prev is not None and abs(est - prev) <= rtol * abs(est):
            return est
        prev = est
        n *= 2
    raise NotConvergedError(f"series for ell={ell} not converged within {truncation} terms")


def example2_closed_form(ell) -> float:
    """(pi/2) [(2l-1)!! / (2l+2)!!]^2, evaluated through log-gamma."""
    ell = int(ell)
    log_odd = special.gammaln(2 * ell + 1) - ell * math.log(2.0) - special.gammaln(ell + 1)
    log_even = (ell + 1) * math.log(2.0) + special.gammaln(ell + 2)
    return 0.5 * math.pi * math.exp(2 * (log_odd - log_even))


def example2_bracket(ell):
    """Bracket [l^-1 / (8 sqrt e), l^-1 / 4] stated for the series values."""
    if np.any(np.asarray(ell) < 1):
        raise ValueError("bracket needs l >= 1")
    return 1.0 / (8.0 * math.sqrt(math.e) * ell), 1.0 / (4.0 * ell)


def example2_power_spectrum(l_max=2001, method="series") -> PowerSpectrum:
    """
    Spectrum whose covariance is 1 - (2/pi) theta.

    The Legendre coefficient of P_{2j+1} in 1 - 2 theta / pi is
    (2/pi)(4j+3) S_j, with S_j the double-factorial series above; even
    degrees vanish. In the (2l+1)/(4pi) C_l convention this is
    C_{2j+1} = 8 S_j. ``method`` selects the series or its closed form.
    """
    l_max = int(l_max)
    vals = np.zeros(l_max + 1)
    for j in range((l_max - 1) // 2 + 1):
        s = example2_spectrum(j) if method == "series" else example2_closed_form(j)
        vals[2 * j + 1] = 8.0 * s
    return PowerSpectrum(vals, alpha=1.0, k0=1.0, provenance="example2", tail="none",
                         note="not condition-A")


# ---------------------------------------------------------------------------
# Cap overlap


def cap_overlap_psi(theta, r) -> float:
    """
    Area of the intersection of two caps of radius r whose centers are theta apart.
    """
    theta, r = float(theta), float(r)
    if not (0.0 <= theta <= math.pi):
        raise ValueError("theta outside [0, pi]")
    if not (0.0 < r < 0.5 * math.pi):
        raise ValueError("r outside (0, pi/2)")
    if theta >= 2.0 * r:
        return 0.0
    full = 4.0 * math.pi * math.sin(0.5 * r) ** 2
    if theta == 0.0:
        return full
    cr, sr = math.cos(r), math.sin(r)
    ct, st = math.cos(theta), math.sin(theta)

    def acos(v):
        return math.acos(min(1.0, max(-1.0, v)))

    a1 = acos((ct - cr * cr) / (sr * sr))
    a2 = acos((cr - ct * cr) / (st * sr))
    area = 2.0 * (math.pi - a1 - 2.0 * a2 * cr)
    return float(min(full, max(0.0, area)))


# ---------------------------------------------------------------------------
# Partial sums of (2l+1)/(4pi) C_l (1 - P_l)


class TailSum(NamedTuple):
    value: float
    remainder: float


def tail_sum_low(s: PowerSpectrum, l_cut, theta) -> float:
    """sum_{l=1}^{l_cut} (2l+1)/(4pi) C_l (1 - P_l(cos theta))."""
    l_cut = int(l_cut)
    if not (1 <= l_cut <= s.l_max):
        raise ValueError("l_cut outside [1, l_max]")
    w = s.weights[: l_cut + 1].copy()
    w[0] = 0.0
    out = kernels.legendre_gap_series(w, np.asarray(theta, dtype=float))
    return float(out) if np.ndim(theta) == 0 else out


def power_tail_mass(amplitude, alpha, start) -> float:
    """sum_{l >= start} (2l+1)/(2pi) * amplitude * l**-alpha via Hurwitz zeta."""
    if start < 1:
        start = 1
    return amplitude / (2.0 * math.pi) * (2.0 * special.zeta(alpha - 1.0, start)
                                          + special.zeta(alpha, start))


def tail_sum_high(s: PowerSpectrum, u_cut) -> TailSum:
    """
    Bound on sup_theta sum_{l >= u_cut} (2l+1)/(4pi) C_l (1 - P_l), using 1 - P_l <= 2.

    ``value`` sums the stored degrees; ``remainder`` bounds the degrees past
    l_max (``K0 * l**-alpha`` for power tails, zero otherwise).
    """
    u_cut = int(u_cut)
    if u_cut < 2:
        raise ValueError("u_cut must be at least 2")
    if u_cut <= s.l_max:
        value = float(math.fsum(2.0 * s.weights[u_cut:]))
    else:
        value = 0.0
    rem = 0.0
    if s.tail == "power":
        rem = power_tail_mass(s.k0, s.alpha, max(u_cut, s.l_max + 1))
    return TailSum(value, float(rem))
