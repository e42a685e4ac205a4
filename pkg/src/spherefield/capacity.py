"""
The singular kernel Phi, energies of measures on caps, capacities and
Monte Carlo hitting frequencies.

Energies are integrated shell by shell in the pair distance, halving the
distance at each shell. A convergent energy shows shell contributions that
decay geometrically; a divergent one shows contributions that stop decaying.
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from .covariance import CovarianceModel, density_at_diagonal
from .geometry import Cap, PolarCapGrid, SpherePoint
from .level_set import hitting_indicator
from .spectrum import PowerSpectrum
from .synthesis import replicate_seed, vector_field

N_SHELLS = 60
SHELL_NODES = 24
RHO_NODES = 32
PSI_NODES = 24
DECAY_THRESHOLD = 0.05
TAIL_LEVELS = 3
FAMILY = (0.0, 0.5, 1.0, 2.0)


def phi_kernel(model: CovarianceModel, theta, d, a=None):
    """
    prod_j p(theta; (a_j, a_j)), the joint density of (T(x), T(y)) on the diagonal.

    ``a=None`` means the origin.
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th <= 0) or np.any(th > math.pi + 1e-12):
        raise ValueError("theta must lie in (0, pi]")
    a = np.zeros(int(d)) if a is None else np.broadcast_to(np.asarray(a, dtype=float), (int(d),))
    out = np.ones_like(th)
    for aj in a:
        out = out * density_at_diagonal(model, th, aj)
    return float(out) if out.ndim == 0 else out


def var_identity_residual(model: CovarianceModel, theta):
    """|[2 pi p(theta; 0)]^-2 - (1 - C(theta)^2)| using the plain correlation."""
    th = np.asarray(theta, dtype=float)
    p0 = density_at_diagonal(model, th, 0.0)
    c = np.asarray(model.covariance(th)) / model.variance
    return np.abs((2.0 * math.pi * p0) ** -2 - (1.0 - c * c))


# ---------------------------------------------------------------------------
# measures

@dataclass(frozen=True)
class PointMass:
    point: SpherePoint

    def describe(self):
        return {"kind": "point", "colatitude": self.point.colatitude,
                "longitude": self.point.longitude}


@dataclass(frozen=True)
class CapMeasure:
    """Probability density proportional to (distance to the cap center)^gamma on a cap."""

    cap: Cap
    gamma: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("tilt exponent must be non-negative")

    def describe(self):
        return {"kind": "cap", "radius": self.cap.radius, "gamma": self.gamma,
                "colatitude": self.cap.center.colatitude, "longitude": self.cap.center.longitude}


@dataclass(frozen=True)
class DiscreteMeasure:
    xyz: np.ndarray
    weights: np.ndarray

    def describe(self):
        return {"kind": "discrete", "n": int(len(self.weights))}


def _gauss(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid[..., None] + half[..., None] * x, half[..., None] * w


@lru_cache(maxsize=64)
def _tilt_norm(radius, gamma):
    val, _ = integrate.quad(lambda p: p ** gamma * math.sin(p), 0.0, radius, epsabs=0, epsrel=1e-13)
    return 1.0 / (2.0 * math.pi * val)


def pair_distance_density(radius, gamma, theta):
    """
    Density of d(X, Y) for X, Y independent with density c rho^gamma on a cap.

    For X at distance rho from the center, the circle of radius theta around X
    meets the cap in the arc |psi| <= psi_max, and Y's distance to the center
    on that arc follows from the spherical law of cosines.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    r = float(radius)
    c = _tilt_norm(r, float(gamma))
    out = np.zeros_like(th)
    for i, t in enumerate(th):
        brk = sorted({0.0, r, min(r, abs(r - t)), min(r, t)})
        total = 0.0
        for lo, hi in zip(brk[:-1], brk[1:]):
            if hi <= lo:
                continue
            rho, wr = _gauss(np.array(lo), np.array(hi), RHO_NODES)
            rho, wr = rho.ravel(), wr.ravel()
            sr = np.sin(rho)
            with np.errstate(divide="ignore", invalid="ignore"):
                cpsi = (math.cos(r) - np.cos(rho) * math.cos(t)) / (sr * math.sin(t))
            psi_max = np.arccos(np.clip(np.nan_to_num(cpsi, nan=1.0), -1.0, 1.0))
            if gamma == 0.0:
                inner = 2.0 * psi_max * c
            else:
                psi, wp = _gauss(np.zeros_like(psi_max), psi_max, PSI_NODES)
                cos_y = np.cos(rho)[:, None] * math.cos(t) + sr[:, None] * math.sin(t) * np.cos(psi)
                rho_y = np.arccos(np.clip(cos_y, -1.0, 1.0))
                inner = 2.0 * (c * rho_y ** gamma * wp).sum(axis=1)
            total += np.sum(wr * c * rho ** gamma * 2.0 * math.pi * sr * math.sin(t) * inner)
        out[i] = total
    return out


@lru_cache(maxsize=64)
def _shell_table(radius, gamma, n_shells=N_SHELLS, n_nodes=SHELL_NODES):
    """Quadrature nodes (in theta) and weights times pair density, per shell."""
    top = min(2.0 * radius, math.pi)
    hi = top * 0.5 ** np.arange(n_shells)
    lo = 0.5 * hi
    u, wu = _gauss(np.log(lo), np.log(hi), n_nodes)
    th = np.exp(u)
    q = pair_distance_density(radius, gamma, th.ravel()).reshape(th.shape)
    return th, wu * th * q


# ---------------------------------------------------------------------------
# energy

@dataclass(frozen=True)
class EnergyResult:
    measure: dict
    value: float
    status: str                       # "finite", "divergent" or "indeterminate"
    trace: np.ndarray = field(repr=False, default=None)
    increments: np.ndarray = field(repr=False, default=None)
    decay: np.ndarray = field(repr=False, default=None)

    @property
    def infinite(self):
        return self.status == "divergent"


def classify_shells(increments, threshold=DECAY_THRESHOLD, levels=TAIL_LEVELS):
    """
    Decide convergence from shell contributions E_j (j = 0 is the widest shell).

    The local decay exponent is log2(E_j / E_{j+1}). Over the deepest
    ``levels`` shells, exponents all at most ``threshold`` mean divergence,
    all above it mean convergence (the rest of the series is summed as a
    geometric tail); anything else is indeterminate.
    """
    inc = np.asarray(increments, dtype=float)
    trace = np.cumsum(inc)
    with np.errstate(divide="ignore", invalid="ignore"):
        decay = np.log2(inc[:-1] / inc[1:])
    tail = decay[-levels:]
    if np.all(tail <= threshold):
        return math.inf, "divergent", trace, decay
    if np.all(tail > threshold):
        qv = float(np.mean(tail))
        ratio = 2.0 ** -qv
        return float(trace[-1] + inc[-1] * ratio / (1.0 - ratio)), "finite", trace, decay
    return float(trace[-1]), "indeterminate", trace, decay


def _cap_energy(mu, k_shells, wq):
    inc = (k_shells * wq).sum(axis=1)
    value, status, trace, decay = classify_shells(inc)
    return EnergyResult(mu.describe(), value, status, trace, inc, decay)


def energy(model: CovarianceModel, d, mu, a=None) -> EnergyResult:
    """
    Phi-energy of ``mu``: the double integral of Phi(d(x, y); a) against mu x mu.
    """
    if isinstance(mu, PointMass):
        return EnergyResult(mu.describe(), math.inf, "divergent")
    if isinstance(mu, DiscreteMeasure):
        if np.any(np.asarray(mu.weights) > 0):
            return EnergyResult(mu.describe(), math.inf, "divergent")
        return EnergyResult(mu.describe(), 0.0, "finite")
    if not isinstance(mu, CapMeasure):
        raise TypeError(f"unsupported measure {type(mu).__name__}")
    th, wq = _shell_table(mu.cap.radius, float(mu.gamma))
    k = phi_kernel(model, th.ravel(), d, a).reshape(th.shape)
    return _cap_energy(mu, k, wq)


def capacity_estimate(model: CovarianceModel, d, cap: Cap, family=FAMILY):
    """
    1 / min energy over the tilted family rho^gamma, gamma in ``family``.

    Returns ``(capacity, results)``; the capacity is 0 when every member has
    infinite energy. Indeterminate members are treated as infinite.
    """
    results = []
    k = None
    for g in family:
        mu = CapMeasure(cap, g)
        th, wq = _shell_table(cap.radius, float(g))
        if k is None:
            # every member shares the shell nodes, hence the kernel values
            k = phi_kernel(model, th.ravel(), d).reshape(th.shape)
        results.append(_cap_energy(mu, k, wq))
    finite = [r.value for r in results if r.status == "finite"]
    if not finite:
        return 0.0, results
    return 1.0 / min(finite), results


# ---------------------------------------------------------------------------
# integrability

@dataclass(frozen=True)
class IntegrabilityResult:
    alpha: float
    d: int
    exponent: float
    analytic: str
    numeric: str
    trace: np.ndarray = field(repr=False, default=None)

    @property
    def classification(self):
        return self.analytic


def integrability_test(alpha, d, r) -> IntegrabilityResult:
    """
    Classify int_0^r theta^(d(1 - alpha/2)) sin(theta) d theta.

    The analytic rule (exponent > -2) and the shell-by-shell numeric rule must
    agree; a disagreement raises, since it can only come from a quadrature bug.
    """
    alpha, d, r = float(alpha), int(d), float(r)
    if alpha <= 2 or d < 1 or not (0 < r < math.pi):
        raise ValueError("need alpha > 2, d >= 1 and 0 < r < pi")
    e = d * (1.0 - 0.5 * alpha)
    analytic = "integrable" if e > -2.0 else "divergent"
    hi = r * 0.5 ** np.arange(N_SHELLS)
    u, wu = _gauss(np.log(0.5 * hi), np.log(hi), SHELL_NODES)
    th = np.exp(u)
    inc = (wu * th ** (e + 1.0) * np.sin(th)).sum(axis=1)
    _, status, trace, _ = classify_shells(inc)
    numeric = {"finite": "integrable", "divergent": "divergent"}.get(status, status)
    if numeric != analytic:
        raise ArithmeticError(f"analytic ({analytic}) and numeric ({numeric}) classifications "
                              f"disagree at alpha={alpha}, d={d}")
    return IntegrabilityResult(alpha, d, e, analytic, numeric, trace)


def criterion_sign(alpha, d):
    return 4.0 - (alpha - 2.0) * d


# ---------------------------------------------------------------------------
# hitting

def neighbour_step(model: CovarianceModel, spacing):
    """E|T(x) - T(y)| for one component at separation ``spacing``."""
    return math.sqrt(2.0 * model.variogram(spacing) / math.pi)


@dataclass(frozen=True)
class HittingTable:
    eps: np.ndarray
    hits: np.ndarray
    replicates: int
    ci: np.ndarray
    trend: str
    d: int

    @property
    def frequency(self):
        return self.hits / self.replicates

    def rows(self):
        for e, h, (lo, hi) in zip(self.eps, self.hits, self.ci):
            yield {"d": self.d, "eps": float(e), "hits": int(h), "replicates": self.replicates,
                   "frequency": h / self.replicates, "ci_low": float(lo), "ci_high": float(hi)}


def eps_schedule(eps_max, eps_min, n):
    return np.geomspace(eps_max, eps_min, int(n))


def hitting_probability_mc(s: PowerSpectrum, d, cap: Cap, t, eps, replicates, seed=0,
                           n_theta=None, threads=1, min_eps=None) -> HittingTable:
    """
    Frequency over replicates of an eps-hit of level ``t`` inside ``cap``.

    The cap is moved to the north pole (the law is isotropic) and only the
    grid rows inside it are synthesised.
    """
    replicates = int(replicates)
    if replicates < 100:
        raise ValueError("need at least 100 replicates")
    eps = np.sort(np.asarray(eps, dtype=float))[::-1]
    if n_theta is None:
        n_theta = s.l_max + 1
    grid = PolarCapGrid(n_theta, 2 * n_theta, cap.radius)
    if min_eps is not None and eps[-1] < min_eps:
        raise ValueError(f"eps {eps[-1]:.3g} below the resolvable {min_eps:.3g}")
    region = Cap(SpherePoint(0.0, 0.0), cap.radius)
    hits = np.zeros(eps.size, dtype=np.int64)
    for i in range(replicates):
        f = vector_field(s, d, (0, s.l_max), grid, replicate_seed(seed, i), threads=threads)
        for j, e in enumerate(eps):
            if hitting_indicator(f, t, region, e):
                hits[j] += 1
            else:
                # nested tolerances: a miss at e is a miss at every smaller e
                break
    ci = np.array([stats.binomtest(int(h), replicates).proportion_ci(method="wilson")
                   for h in hits])
    lo_f, hi_f = hits[-1] / replicates, hits[0] / replicates
    if hi_f == 0:
        trend = "none"
    elif lo_f >= 0.5 * hi_f:
        trend = "flat"
    else:
        trend = "decreasing"
    return HittingTable(eps, hits, replicates, ci, trend, int(d))
