"""
Gaussian harmonic coefficients and band-limited field synthesis.

Random numbers come from counter-based Philox streams keyed by
``(seed, component, l)``: each degree of each component owns a stream, and
the order m has a fixed slot inside it. A coefficient therefore never depends
on the band, the grid, the thread count or the evaluation order, so band
splits of one draw share their coefficients exactly.
"""
import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Cap, EquiangularGrid, PointSet
from .spectrum import PowerSpectrum

HEADER = struct.Struct("<4sHBBIIIQ32s")
MAGIC = b"SPHF"
FORMAT_VERSION = 1


def degree_stream(seed, component, ell):
    """Generator for one (seed, component, degree) stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(component), int(ell)))
    return np.random.Generator(np.random.Philox(ss))


def replicate_seed(seed, index):
    """Independent 64-bit seed for replicate ``index`` of a run seeded with ``seed``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class HarmonicCoefficients:
    """
    a_lm for lo <= l <= hi, stored for m >= 0 as ``alm[l, m]``.

    Negative orders follow from ``a_{l,-m} = (-1)^m conj(a_lm)``.
    """

    alm: np.ndarray
    lo: int
    hi: int
    seed: int
    component: int = 0
    spectrum_digest: bytes = b""

    def coefficient(self, ell, m):
        if not (self.lo <= ell <= self.hi) or abs(m) > ell:
            return 0j
        a = complex(self.alm[ell, abs(m)])
        return a if m >= 0 else (-1) ** m * a.conjugate()

    def full_degree(self, ell):
        """a_{l,m} for m = -l..l."""
        pos = self.alm[ell, : ell + 1]
        ms = np.arange(1, ell + 1)
        neg = ((-1.0) ** ms) * np.conj(pos[1:])
        return np.concatenate([neg[::-1], pos])

    def restricted(self, lo, hi):
        """Same draw with degrees outside [lo, hi] set to zero."""
        alm = np.array(self.alm)
        alm[:lo] = 0.0
        alm[hi + 1:] = 0.0
        alm.setflags(write=False)
        return HarmonicCoefficients(alm, max(lo, self.lo), min(hi, self.hi), self.seed,
                                    self.component, self.spectrum_digest)


def sample_coefficients(s: PowerSpectrum, band, seed, component=0) -> HarmonicCoefficients:
    """
    Draw a_lm for l in ``band = (lo, hi)``.

    a_l0 ~ N(0, C_l) is real; for m > 0 the real and imaginary parts are
    independent N(0, C_l / 2).
    """
    lo, hi = (int(v) for v in band)
    if not (0 <= lo <= hi <= s.l_max):
        raise ValueError(f"band {band} outside [0, {s.l_max}]")
    alm = np.zeros((hi + 1, hi + 1), dtype=np.complex128)
    for ell in range(lo, hi + 1):
        c = s.values[ell]
        z = degree_stream(seed, component, ell).standard_normal(2 * ell + 1)
        if c == 0.0:
            continue
        alm[ell, 0] = math.sqrt(c) * z[0]
        if ell:
            h = math.sqrt(0.5 * c)
            alm[ell, 1: ell + 1] = h * (z[1::2] + 1j * z[2::2])
    alm.setflags(write=False)
    return HarmonicCoefficients(alm, lo, hi, int(seed), int(component), s.digest())


@dataclass(frozen=True)
class FieldSample:
    """
    Field values on a grid or point set.

    ``values`` has shape (d, n_points), points in the grid's flat order.
    """

    grid: object
    values: np.ndarray
    seed: int = 0
    band: tuple = (0, 0)
    spectrum_digest: bytes = b""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.shape[1] != self.grid.size:
            raise ValueError("values do not match the grid size")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite field values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.values.shape[0]

    def component(self, j):
        return FieldSample(self.grid, self.values[j: j + 1], self.seed, self.band,
                           self.spectrum_digest, dict(self.meta))

    def take(self, d):
        """First ``d`` components."""
        return FieldSample(self.grid, self.values[:d], self.seed, self.band,
                           self.spectrum_digest, dict(self.meta))

    def __add__(self, other):
        if other.grid is not self.grid and other.grid.size != self.grid.size:
            raise ValueError("grids differ")
        return FieldSample(self.grid, self.values + other.values, self.seed, self.band,
                           self.spectrum_digest)

    def save(self, path):
        """Binary layout: fixed header then little-endian float64 component blocks."""
        g = self.grid
        if g.kind not in (EquiangularGrid.kind, PointSet.kind):
            raise ValueError(f"grid kind {g.kind} has no file layout")
        header = HEADER.pack(MAGIC, FORMAT_VERSION, g.kind, 0, g.n_theta, g.n_phi, self.d,
                             int(self.seed) & 0xFFFFFFFFFFFFFFFF,
                             self.spectrum_digest.ljust(32, b"\0")[:32])
        with open(path, "wb") as fh:
            fh.write(header)
            if g.kind == PointSet.kind:
                fh.write(np.ascontiguousarray(g.xyz, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, kind, _, n_theta, n_phi, d, seed, digest = HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ValueError("not a field file")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported field format version {version}")
        off = HEADER.size
        if kind == EquiangularGrid.kind:
            grid = EquiangularGrid(n_theta, n_phi)
        else:
            xyz = np.frombuffer(raw, dtype="<f8", count=3 * n_theta, offset=off).reshape(-1, 3)
            off += xyz.nbytes
            grid = PointSet(xyz)
        vals = np.frombuffer(raw, dtype="<f8", count=d * grid.size, offset=off).reshape(d, -1)
        return cls(grid, vals.astype(float), seed=seed, spectrum_digest=digest)

    def save_csv(self, path):
        """One row per point: colatitude, longitude, then one column per component."""
        g = self.grid
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["colatitude", "longitude"] + [f"T{j + 1}" for j in range(self.d)])
            for i, (th, ph) in enumerate(zip(g.colatitudes, g.longitudes)):
                w.writerow([repr(float(th)), repr(float(ph))] + [repr(float(v)) for v in self.values[:, i]])


def _rows_to_grid(g, n_phi):
    """Real field on each row from g[i, m], m >= 0: T = sum_m g_m e^{i m phi} + c.c."""
    spec = np.zeros((g.shape[0], n_phi // 2 + 1), dtype=np.complex128)
    mmax = min(g.shape[1], spec.shape[1])
    spec[:, :mmax] = g[:, :mmax]
    return n_phi * np.fft.irfft(spec, n=n_phi, axis=1)


def synthesize_rows(c: HarmonicCoefficients, theta_rows, n_phi, lo=None, hi=None):
    """Field values on the rows ``theta_rows`` times ``n_phi`` uniform longitudes."""
    lo = c.lo if lo is None else max(lo, c.lo)
    hi = c.hi if hi is None else min(hi, c.hi)
    if n_phi < 2 * hi + 1:
        raise ValueError(f"{n_phi} longitudes cannot resolve degree {hi} (need >= {2 * hi + 1})")
    if hi < lo:
        return np.zeros((len(theta_rows), n_phi))
    g = kernels.alm_rows(c.alm, lo, hi, np.asarray(theta_rows, dtype=float))
    return _rows_to_grid(g, n_phi)


def evaluate_field(c: HarmonicCoefficients, grid, lo=None, hi=None) -> FieldSample:
    """
    One component on ``grid``.

    For an :class:`EquiangularGrid` the synthesis runs row by row (Legendre
    sums then an inverse real FFT over longitude); a :class:`PointSet` falls
    back to direct summation.
    """
    if isinstance(grid, EquiangularGrid):
        vals = synthesize_rows(c, grid.theta, grid.n_phi, lo, hi).reshape(-1)
    else:
        vals = evaluate_points(c, grid.xyz, lo, hi)
    band = (c.lo if lo is None else lo, c.hi if hi is None else hi)
    return FieldSample(grid, vals[None, :], c.seed, band, c.spectrum_digest)


def evaluate_points(c: HarmonicCoefficients, xyz, lo=None, hi=None, return_residue=False):
    """
    Direct summation at arbitrary points (slow path).

    With ``return_residue`` the imaginary part of the full complex sum over
    m = -l..l is returned as well.
    """
    lo = c.lo if lo is None else max(lo, c.lo)
    hi = c.hi if hi is None else min(hi, c.hi)
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    theta = np.arctan2(np.hypot(xyz[:, 0], xyz[:, 1]), xyz[:, 2])
    phi = np.arctan2(xyz[:, 1], xyz[:, 0])
    if hi < lo:
        zero = np.zeros(len(xyz))
        return (zero, zero) if return_residue else zero
    g = kernels.alm_rows(c.alm, lo, hi, theta)
    ms = np.arange(hi + 1)
    e = np.exp(1j * phi[:, None] * ms[None, :])
    pos = g * e
    # m < 0 terms: a_{l,-m} Y_{l,-m} = conj(a_lm Y_lm)
    total = pos[:, 0] + (pos[:, 1:] + np.conj(pos[:, 1:])).sum(axis=1)
    if return_residue:
        return total.real, np.abs(total.imag)
    return total.real


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def vector_field(s: PowerSpectrum, d, band, grid, seed, threads=1) -> FieldSample:
    """d independent components; component j uses the streams of (seed, j)."""
    d = int(d)
    if d < 1:
        raise ValueError("need at least one component")

    def one(j):
        return evaluate_field(sample_coefficients(s, band, seed, j), grid).values[0]

    vals = np.vstack(_map(one, range(d), threads))
    return FieldSample(grid, vals, int(seed), tuple(band), s.digest(),
                       {"d": d, "spectrum": s.metadata()})


@dataclass(frozen=True)
class BandSplit:
    low: int
    high: int
    main: FieldSample
    residual: FieldSample

    @property
    def full(self):
        return self.main + self.residual


def band_split(s: PowerSpectrum, low, high, grid, seed, d=1, threads=1) -> BandSplit:
    """
    Split one draw into the band [low, high] and its complement.

    Both parts use the same coefficients, so they add up to the full field.
    """
    low, high = int(low), int(high)
    if not (1 <= low < high <= s.l_max):
        raise ValueError(f"need 1 <= L < U <= {s.l_max}, got L={low}, U={high}")

    def one(j):
        c = sample_coefficients(s, (0, s.l_max), seed, j)
        main = evaluate_field(c, grid, low, high).values[0]
        below = evaluate_field(c, grid, 0, low - 1).values[0]
        above = evaluate_field(c, grid, high + 1, s.l_max).values[0] if high < s.l_max else 0.0
        return main, below + above

    parts = _map(one, range(int(d)), threads)
    main = FieldSample(grid, np.vstack([p[0] for p in parts]), int(seed), (low, high), s.digest())
    resid = FieldSample(grid, np.vstack([p[1] for p in parts]), int(seed), (-1, -1), s.digest())
    return BandSplit(low, high, main, resid)


def band_limits(r, b, beta):
    """L = [B^-beta / r] and U = [B^(1-beta) / r]."""
    return int(math.floor(b ** (-beta) / r)), int(math.floor(b ** (1.0 - beta) / r))


def oscillation(f: FieldSample, cap: Cap) -> float:
    """Largest Euclidean distance between field vectors at grid points of the cap."""
    mask = cap.contains(f.grid.xyz)
    if mask.sum() < 2:
        raise ValueError("cap holds fewer than two grid points at this resolution")
    return kernels.max_pairwise_distance(np.ascontiguousarray(f.values[:, mask].T))


def field_summary(f: FieldSample):
    """Quadrature mean and variance per component."""
    w = f.grid.weights
    tot = w.sum()
    mean = (f.values * w).sum(axis=1) / tot
    var = ((f.values - mean[:, None]) ** 2 * w).sum(axis=1) / tot
    return {"mean": mean.tolist(), "variance": var.tolist(),
            "min": f.values.min(axis=1).tolist(), "max": f.values.max(axis=1).tolist()}
