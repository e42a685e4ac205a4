"""
Experiment configuration, orchestration and result files.

Every command takes an :class:`ExperimentConfig`, writes its tables into the
configured output directory and returns a :class:`RunRecord`. Tables are CSV
with a header row; every row carries the config hash and seed, and every JSON
file carries them as top-level keys.
"""
import csv
import glob
import hashlib
import json
import math
import os
import re
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import kernels
from .capacity import FAMILY, capacity_estimate, hitting_probability_mc, neighbour_step
from .covariance import CovarianceModel, slnd_ratio
from .geometry import Cap, EquiangularGrid, PolarCapGrid, SpherePoint, build_voronoi_hierarchy
from .level_set import box_dimension, default_tolerance, extract_level_set
from .local_time import (default_bandwidth, expected_local_time, local_time_estimate,
                         local_time_integral, phi, radius_schedule, w, GaugeFunction)
from .spectrum import (PowerSpectrum, condition_a_spectrum, example1_spectrum,
                       example2_power_spectrum, nonempty_level_set_predicted, normalize,
                       predicted_dimension)
from .synthesis import (band_limits, band_split, field_summary, oscillation, replicate_seed,
                        vector_field)

VERSION = "0.1.0"
RAW_COMMANDS = ("simulate",)
SPECTRUM_KINDS = ("condition-A", "example1", "example2", "csv")
REPORT_INPUTS = {
    "dimension": "dimension-*.csv",
    "hitting": "hitting-*.csv",
    "energy": "energy-*.csv",
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source file when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class InputMissingError(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    """
    Parameters shared by all commands.

    ``spectrum`` is a dict with ``kind`` (condition-A, example1, example2 or
    csv) and the kind's own keys: ``alpha`` and ``l_max`` for condition-A,
    ``h`` and ``l_max`` for example1, ``l_max`` for example2, ``path`` for csv.
    """

    spectrum: dict = field(default_factory=lambda: {"kind": "condition-A", "alpha": 2.5,
                                                     "l_max": 128})
    normalize: bool = True
    d: int = 1
    d_values: list = field(default_factory=lambda: [1, 2, 4, 8, 12])
    alphas: list = field(default_factory=list)
    n_theta: int = 0
    n_phi: int = 0
    B: list = field(default_factory=lambda: [4.0, 8.0, 16.0])
    beta: float = 0.0
    L: int = 0
    U: int = 0
    radius: float = 0.1
    radii: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    levels: list = field(default_factory=lambda: [-2.0, -1.0, 0.0, 1.0, 2.0])
    t: float = 0.0
    scales: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1])
    k_max: int = 7
    r0: float = 0.05
    c_grid: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0])
    eps_factor: float = 0.5
    replicates: int = 20
    criteria: list = field(default_factory=lambda: list(range(1, 11)))
    scale: str = "full"
    seed: int = 0
    threads: int = 1
    out: str = "results"

    # -- derived -----------------------------------------------------------

    @property
    def alpha(self) -> float:
        sp = self.spectrum
        kind = sp.get("kind")
        if kind == "condition-A":
            return float(sp.get("alpha", float("nan")))
        if kind == "example1":
            return 2.0 * float(sp.get("h", float("nan"))) + 2.0
        if kind == "example2":
            return 1.0
        return float(sp.get("alpha", float("nan")))

    @property
    def l_max(self) -> int:
        return int(self.spectrum.get("l_max", 128))

    @property
    def effective_beta(self) -> float:
        return self.beta if self.beta > 0 else (self.alpha - 2.0) / 4.0

    def grid(self):
        if self.n_theta:
            return EquiangularGrid(self.n_theta, self.n_phi or 2 * self.n_theta)
        return EquiangularGrid.for_band_limit(self.l_max)

    def build_spectrum(self) -> PowerSpectrum:
        sp = self.spectrum
        kind = sp["kind"]
        if kind == "condition-A":
            s = condition_a_spectrum(sp["alpha"], l_max=self.l_max)
        elif kind == "example1":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                s = example1_spectrum(sp["h"], l_max=self.l_max)
        elif kind == "example2":
            s = example2_power_spectrum(self.l_max)
        else:
            s = PowerSpectrum.from_csv(sp["path"])
        return normalize(s) if self.normalize else s

    # -- serialisation -----------------------------------------------------

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def hash(self) -> str:
        """SHA-256 of the canonical JSON form, excluding output location and thread count."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d, text=None, source=None, command=None):
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(f"unknown key {k!r}", _line_of(text, k), source)
        cfg = cls(**d)
        cfg.validate(command, text=text, source=source, warn=False)
        return cfg

    @classmethod
    def from_json(cls, text, source=None, command=None):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc.msg} (column {exc.colno})",
                              exc.lineno, source) from None
        if not isinstance(d, dict):
            raise ConfigError("top level must be a JSON object", 1, source)
        return cls.from_dict(d, text=text, source=source, command=command)

    @classmethod
    def load(cls, path, command=None):
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.from_json(text, source=str(path), command=command)

    # -- validation --------------------------------------------------------

    def validate(self, command=None, text=None, source=None, warn=True):
        """
        Check ranges; raise :class:`ConfigError` naming the offending line.

        Theory commands need 2 < alpha < 4; raw simulation only warns.
        """
        def fail(key, msg):
            raise ConfigError(msg, _line_of(text, key), source)

        def is_int(v):
            return isinstance(v, (int, np.integer)) and not isinstance(v, bool)

        def is_num(v):
            return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)

        sp = self.spectrum
        if not isinstance(sp, dict) or sp.get("kind") not in SPECTRUM_KINDS:
            fail("spectrum", f"spectrum.kind must be one of {', '.join(SPECTRUM_KINDS)}")
        if sp["kind"] == "condition-A" and not is_num(sp.get("alpha")):
            fail("spectrum", "condition-A spectrum needs a numeric alpha")
        if sp["kind"] == "example1" and not is_num(sp.get("h")):
            fail("spectrum", "example1 spectrum needs a numeric h")
        if sp["kind"] == "csv" and not isinstance(sp.get("path"), str):
            fail("spectrum", "csv spectrum needs a path")
        if "l_max" in sp and (not is_int(sp["l_max"]) or sp["l_max"] < 1):
            fail("l_max", "l_max must be a positive integer")
        for key in ("d", "k_max", "replicates", "threads"):
            v = getattr(self, key)
            if not is_int(v) or v < 1:
                fail(key, f"{key} must be a positive integer")
        for key in ("n_theta", "n_phi", "L", "U", "seed"):
            v = getattr(self, key)
            if not is_int(v) or v < 0:
                fail(key, f"{key} must be a non-negative integer")
        if self.seed >= 2 ** 64:
            fail("seed", "seed must fit in 64 bits")
        if self.n_theta == 1:
            fail("n_theta", "n_theta must be at least 2")
        if not all(is_int(v) and v >= 1 for v in self.d_values) or not self.d_values:
            fail("d_values", "d_values must be a non-empty list of positive integers")
        if not all(is_num(b) and b > 1 for b in self.B) or not self.B:
            fail("B", "every B must exceed 1")
        if self.U and self.L > self.U:
            fail("L", "need L <= U")
        for key in ("radius", "r0", "eps_factor"):
            v = getattr(self, key)
            if not is_num(v) or not v > 0:
                fail(key, f"{key} must be positive")
        if self.radius > math.pi:
            fail("radius", "radius must be at most pi")
        if self.r0 >= 1.0 / math.e:
            fail("r0", "r0 must be below 1/e")
        for key in ("radii", "eps", "scales", "c_grid"):
            if not all(is_num(v) and v > 0 for v in getattr(self, key)):
                fail(key, f"{key} entries must be positive numbers")
        if not all(is_num(v) for v in self.levels + self.alphas):
            fail("levels", "levels and alphas must be numbers")
        if not all(is_int(c) and 1 <= c <= 10 for c in self.criteria):
            fail("criteria", "criteria must be integers in 1..10")
        if self.scale not in ("full", "quick"):
            fail("scale", "scale must be 'full' or 'quick'")
        alpha = self.alpha
        theory = command is not None and command not in RAW_COMMANDS
        in_range = 2.0 < alpha < 4.0
        if not in_range:
            msg = f"alpha = {alpha:g} violates the condition 2 < alpha < 4"
            if theory:
                fail("alpha" if "alpha" in sp else "spectrum", msg)
            elif command is not None and warn:
                warnings.warn(msg + "; simulating anyway", RuntimeWarning, stacklevel=2)
        if self.beta < 0 or (self.beta > 0 and in_range and self.beta > alpha / 2.0 - 1.0):
            fail("beta", f"beta must lie in (0, alpha/2 - 1] = (0, {alpha / 2 - 1:g}]")
        return self


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


# ---------------------------------------------------------------------------
# run records and files

@dataclass
class RunRecord:
    command: str
    config_hash: str
    seed: int
    version: str = VERSION
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    exit_code: int = 0

    def to_dict(self):
        return _jsonable(asdict(self))

    def save(self, out_dir):
        path = os.path.join(out_dir, f"run-{self.command}-{self.config_hash}.json")
        _write_json(path, self.to_dict())
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, bytes):
        return obj.hex()
    return obj


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, header, rows, cfg: ExperimentConfig):
    """CSV with header; ``config_hash`` and ``seed`` columns appended to every row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(header) + ["config_hash", "seed"])
        for r in rows:
            wr.writerow([_cell(v) for v in r] + [cfg.hash, cfg.seed])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _replicate_map(fn, n, threads):
    """fn(i) for i in range(n); results in replicate order whatever the thread count."""
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))


def _prepare(cfg, command):
    cfg.validate(command=command)
    os.makedirs(cfg.out, exist_ok=True)
    return RunRecord(command, cfg.hash, cfg.seed)


def _out(cfg, stem, ext="csv"):
    return os.path.join(cfg.out, f"{stem}-{cfg.hash}.{ext}")


def _finish(rec, cfg, t0):
    rec.timings["total"] = time.perf_counter() - t0
    rec.outputs["record"] = rec.save(cfg.out)
    return rec


def _fit_loglog(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: ExperimentConfig) -> RunRecord:
    """Synthesise one field sample, write the binary and a JSON summary."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "simulate")
    s = cfg.build_spectrum()
    grid = cfg.grid()
    f = vector_field(s, cfg.d, (0, s.l_max), grid, cfg.seed, threads=cfg.threads)
    path = _out(cfg, "field", "sphf")
    f.save(path)
    summ = field_summary(f)
    meta = {"config_hash": cfg.hash, "seed": cfg.seed, "summary": summ,
            "spectrum": s.metadata(), "grid": grid.describe(), "d": cfg.d}
    _write_json(_out(cfg, "field", "json"), meta)
    rec.outputs.update({"field": path, "metadata": _out(cfg, "field", "json")})
    rec.summary = summ
    return _finish(rec, cfg, t0)


def cmd_covariance(cfg: ExperimentConfig, n=200) -> RunRecord:
    """Covariance and variogram on a log-spaced separation grid."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "covariance")
    m = CovarianceModel(cfg.build_spectrum())
    th = np.geomspace(1e-4, math.pi, n)
    cov = m.covariance(th)
    var = m.variogram(th)
    bound = m.remainder_bound()
    rows = [(a, b, c, bound) for a, b, c in zip(th, cov, var)]
    rec.outputs["covariance"] = write_table(_out(cfg, "covariance"),
                                            ["theta", "covariance", "variogram", "tail_bound"],
                                            rows, cfg)
    rec.summary = {"variance": float(m.variance), "tail": m.tail}
    return _finish(rec, cfg, t0)


def cmd_variogram(cfg: ExperimentConfig, lo=1e-3, hi=1e-1, n=60) -> RunRecord:
    """Variogram on [lo, hi] and its fitted log-log slope against alpha - 2."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "variogram")
    m = CovarianceModel(cfg.build_spectrum())
    th = np.geomspace(lo, hi, n)
    v = m.variogram(th)
    slope = _fit_loglog(th, v)
    rec.outputs["variogram"] = write_table(_out(cfg, "variogram"), ["theta", "variogram"],
                                           zip(th, v), cfg)
    rec.summary = {"slope": slope, "expected": cfg.alpha - 2.0,
                   "deviation": abs(slope - (cfg.alpha - 2.0))}
    return _finish(rec, cfg, t0)


def cmd_slnd(cfg: ExperimentConfig, n_conditioners=4) -> RunRecord:
    """Minimum SLND ratio over random configurations at each scale."""
    from .verification import random_configuration
    t0 = time.perf_counter()
    rec = _prepare(cfg, "slnd")
    m = CovarianceModel(cfg.build_spectrum())
    rows, minima = [], {}
    for k, sc in enumerate(cfg.scales):
        rng = np.random.default_rng(replicate_seed(cfg.seed, k))
        vals = [slnd_ratio(m, *random_configuration(rng, sc, n_conditioners))
                for _ in range(cfg.replicates)]
        rows += [(sc, i, v) for i, v in enumerate(vals)]
        minima[str(sc)] = float(min(vals))
    rec.outputs["slnd"] = write_table(_out(cfg, "slnd"), ["scale", "configuration", "ratio"],
                                      rows, cfg)
    lo, hi = min(minima.values()), max(minima.values())
    rec.summary = {"minima": minima, "spread": hi / lo if lo > 0 else None}
    return _finish(rec, cfg, t0)


def cmd_localtime(cfg: ExperimentConfig) -> RunRecord:
    """Counting local times at the configured levels and the occupation identity."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "localtime")
    s = cfg.build_spectrum()
    grid = cfg.grid()
    region = None if cfg.radius >= math.pi else Cap(SpherePoint(0.5 * math.pi, 0.0), cfg.radius)
    area = 4.0 * math.pi if region is None else region.area
    eps = cfg.eps[0] if cfg.eps else default_bandwidth(cfg.alpha, grid.spacing)

    def one(i):
        f = vector_field(s, cfg.d, (0, s.l_max), grid, replicate_seed(cfg.seed, i))
        lts = [local_time_estimate(f, t, region, eps, warn=False).value for t in cfg.levels]
        occ = local_time_integral(f, region, eps) if cfg.d <= 2 else float("nan")
        return lts, occ

    res = _replicate_map(one, cfg.replicates, cfg.threads)
    rows = []
    for i, (lts, occ) in enumerate(res):
        for t, v in zip(cfg.levels, lts):
            rows.append((i, t, v, expected_local_time(t, area, cfg.d), occ / area))
    rec.outputs["localtime"] = write_table(
        _out(cfg, "localtime"),
        ["replicate", "t", "local_time", "expected", "occupation_ratio"], rows, cfg)
    ratios = [r[1] / area for r in res]
    rec.summary = {"eps": eps, "area": area,
                   "max_occupation_error": float(np.nanmax(np.abs(np.array(ratios) - 1.0)))}
    return _finish(rec, cfg, t0)


def cmd_levelset(cfg: ExperimentConfig) -> RunRecord:
    """Extract the grid level set of one sample at level ``t``."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "levelset")
    s = cfg.build_spectrum()
    grid = cfg.grid()
    f = vector_field(s, cfg.d, (0, s.l_max), grid, cfg.seed, threads=cfg.threads)
    eps = cfg.eps[0] if cfg.eps else default_tolerance(f, cfg.alpha)
    ls = extract_level_set(f, cfg.t, eps)
    xyz = ls.points()
    rows = [(int(i), *p) for i, p in zip(ls.members, xyz)]
    rec.outputs["levelset"] = write_table(_out(cfg, "levelset"), ["index", "x", "y", "z"],
                                          rows, cfg)
    rec.summary = {"eps": eps, "points": ls.size}
    return _finish(rec, cfg, t0)


def _hierarchy(cfg):
    n_theta = cfg.n_theta or 2 * cfg.l_max
    grid = EquiangularGrid(n_theta, cfg.n_phi or 2 * n_theta)
    return build_voronoi_hierarchy(cfg.k_max, grid)


def cmd_dimension(cfg: ExperimentConfig) -> RunRecord:
    """Box-counting slope of the level set, one row per replicate."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "dimension")
    s = cfg.build_spectrum()
    h = _hierarchy(cfg)
    rec.timings["hierarchy"] = time.perf_counter() - t0
    pred = predicted_dimension(cfg.alpha, cfg.d)

    def one(i):
        f = vector_field(s, cfg.d, (0, s.l_max), h.grid, replicate_seed(cfg.seed, i))
        eps = cfg.eps[0] if cfg.eps else default_tolerance(f, cfg.alpha)
        ls = extract_level_set(f, cfg.t, eps)
        try:
            fit = box_dimension(ls, h)
            return eps, ls.size, fit.slope, fit.stderr
        except ValueError:
            return eps, ls.size, float("nan"), float("nan")

    res = _replicate_map(one, cfg.replicates, cfg.threads)
    rows = [(cfg.alpha, cfg.d, i, r[2], r[3], pred, r[0], r[1]) for i, r in enumerate(res)]
    rec.outputs["dimension"] = write_table(
        _out(cfg, "dimension"),
        ["alpha", "d", "replicate", "slope", "stderr", "predicted", "eps", "points"], rows, cfg)
    slopes = np.array([r[2] for r in res])
    rec.summary = {"median": float(np.nanmedian(slopes)) if np.isfinite(slopes).any() else None,
                   "predicted": pred, "failed_fits": int(np.isnan(slopes).sum())}
    return _finish(rec, cfg, t0)


def cmd_capacity(cfg: ExperimentConfig) -> RunRecord:
    """Capacity of a cap and the energy shell traces for every d in ``d_values``."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "capacity")
    m = CovarianceModel(cfg.build_spectrum())
    cap = Cap(SpherePoint(0.5, 0.5), min(cfg.radius, 0.5 * math.pi))
    caps, traces, summ = [], [], {}
    for d in cfg.d_values:
        val, results = capacity_estimate(m, d, cap, FAMILY)
        summ[str(d)] = val
        for g, r in zip(FAMILY, results):
            caps.append((cfg.alpha, d, g, r.value, r.status, val))
            for j, (inc, tr) in enumerate(zip(r.increments, r.trace)):
                traces.append((cfg.alpha, d, g, j, inc, tr))
    rec.outputs["capacity"] = write_table(
        _out(cfg, "capacity"), ["alpha", "d", "gamma", "energy", "status", "capacity"], caps, cfg)
    rec.outputs["energy"] = write_table(
        _out(cfg, "energy"), ["alpha", "d", "gamma", "shell", "increment", "cumulative"],
        traces, cfg)
    rec.summary = {"capacity": summ}
    return _finish(rec, cfg, t0)


def cmd_hitting(cfg: ExperimentConfig, n_eps=6) -> RunRecord:
    """eps-hitting frequencies of level ``t`` in a cap for each d in ``d_values``."""
    t0 = time.perf_counter()
    rec = _prepare(cfg, "hitting")
    s = cfg.build_spectrum()
    n_theta = cfg.n_theta or 2 * s.l_max
    m = CovarianceModel(s, tail=False)
    finest = 0.5 * neighbour_step(m, math.pi / n_theta)
    eps = np.array(sorted(cfg.eps, reverse=True)) if cfg.eps else np.geomspace(1.0, finest, n_eps)
    cap = Cap(SpherePoint(0.0, 0.0), cfg.radius)
    rows, summ = [], {}
    for k, d in enumerate(cfg.d_values):
        tab = hitting_probability_mc(s, d, cap, cfg.t, eps, cfg.replicates,
                                     seed=replicate_seed(cfg.seed, k), n_theta=n_theta,
                                     threads=cfg.threads)
        for r in tab.rows():
            rows.append((cfg.alpha, r["d"], r["eps"], r["hits"], r["replicates"], r["frequency"],
                         r["ci_low"], r["ci_high"]))
        summ[str(d)] = {"finest": float(tab.frequency[-1]), "trend": tab.trend}
    rec.outputs["hitting"] = write_table(
        _out(cfg, "hitting"),
        ["alpha", "d", "eps", "hits", "replicates", "frequency", "ci_low", "ci_high"], rows, cfg)
    rec.summary = {"finest_eps": float(eps[-1]), "by_d": summ}
    return _finish(rec, cfg, t0)


def tail_table(samples, n=12, lo=0.5, hi=0.97):
    """Empirical P{X >= u} on a quantile grid of u, with the log P ~ u^2 fit."""
    x = np.sort(np.asarray(samples, dtype=float))
    u = np.quantile(x, np.linspace(lo, hi, n))
    p = np.array([(x >= v).mean() for v in u])
    y = np.log(p)
    slope, icept = np.polyfit(u ** 2, y, 1)
    pred = icept + slope * u ** 2
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - pred) ** 2) / ss if ss > 0 else 1.0
    return u, p, float(slope), float(r2)


def empirical_tail(samples, u):
    """P{X >= u} from the samples; equals 1 below the smallest sample."""
    x = np.asarray(samples, dtype=float)
    return np.array([(x >= v).mean() for v in np.atleast_1d(u)])


def cmd_oscillation_tail(cfg: ExperimentConfig) -> RunRecord:
    """
    Oscillation tails over D(x, r) for the full field and the band complement.

    For each B the band is L = [B^-beta / r], U = [B^(1-beta) / r] (or the
    configured L, U). The complement's log-tail slope against u^2 is fitted
    over several upper-quantile windows and summarised by its median.
    """
    from .verification import tail_slopes
    t0 = time.perf_counter()
    if cfg.replicates < 500:
        raise ConfigError("oscillation-tail needs at least 500 replicates")
    rec = _prepare(cfg, "oscillation-tail")
    s = cfg.build_spectrum()
    r = cfg.radius
    n_theta = cfg.n_theta or s.l_max + 1
    grid = PolarCapGrid(n_theta, 2 * n_theta, r)
    region = Cap(SpherePoint(0.0, 0.0), r)
    beta = cfg.effective_beta
    bands = {}
    for b in cfg.B:
        bands[b] = (cfg.L, cfg.U) if cfg.U else band_limits(r, b, beta)

    def one(i):
        out = {}
        full = None
        for b, (low, high) in bands.items():
            sp = band_split(s, low, high, grid, replicate_seed(cfg.seed, i), d=cfg.d)
            if full is None:
                full = oscillation(sp.full, region)
            out[b] = oscillation(sp.residual, region)
        return full, out

    res = _replicate_map(one, cfg.replicates, cfg.threads)
    full = [x[0] for x in res]
    rows, fits = [], []
    u, p, slope, r2 = tail_table(full)
    rows += [("full", "", a, b) for a, b in zip(u, p)]
    fits.append(("full", "", slope, r2, float("nan")))
    summ = {"full": {"slope": slope, "r2": r2}, "complement": {}}
    for b in cfg.B:
        xs = [x[1][b] for x in res]
        u, p, slope, r2 = tail_table(xs)
        med = float(np.median(tail_slopes(xs)))
        rows += [("complement", b, a, c) for a, c in zip(u, p)]
        fits.append(("complement", b, slope, r2, med))
        summ["complement"][str(b)] = {"L": bands[b][0], "U": bands[b][1], "slope": slope,
                                      "r2": r2, "median_slope": med}
    mags = [abs(summ["complement"][str(b)]["median_slope"]) for b in sorted(cfg.B)]
    summ["increasing_in_B"] = all(q > p_ for p_, q in zip(mags, mags[1:]))
    rec.outputs["tail"] = write_table(_out(cfg, "oscillation-tail"),
                                      ["field", "B", "u", "probability"], rows, cfg)
    rec.outputs["fits"] = write_table(_out(cfg, "oscillation-fits"),
                                      ["field", "B", "slope", "r2", "median_slope"], fits, cfg)
    rec.summary = summ
    return _finish(rec, cfg, t0)


def smooth_event_frequencies(osc, lt, radii, c_grid, alpha, d):
    """
    Fraction of replicates for which some radius satisfies both bounds.

    ``osc`` and ``lt`` are (replicates, radii) arrays of oscillations and
    local times at the replicate's own value. For constant C the event at r is
    osc <= 2 C w(r) and L > (pi / C) phi(r).
    """
    g = GaugeFunction(alpha, d)
    wr = np.asarray(w(radii, alpha), dtype=float)
    ph = np.asarray(phi(radii, g), dtype=float)
    out = []
    for c in c_grid:
        ok = (osc <= 2.0 * c * wr[None, :]) & (lt > (math.pi / c) * ph[None, :])
        out.append(float(ok.any(axis=1).mean()))
    return np.array(out)


def cmd_smooth_event(cfg: ExperimentConfig) -> RunRecord:
    """
    Frequency of the smooth-point event on the 0.8 radius schedule in (r0^2, r0).

    Local times use bandwidth ``eps_factor * w(r)`` at radius r. Radii below
    the grid spacing are dropped; an empty schedule is an error.
    """
    t0 = time.perf_counter()
    if cfg.replicates < 200:
        raise ConfigError("smooth-event needs at least 200 replicates")
    rec = _prepare(cfg, "smooth-event")
    s = cfg.build_spectrum()
    r0 = cfg.r0
    n_theta = cfg.n_theta or 2 * (s.l_max + 1)
    grid = PolarCapGrid(n_theta, 2 * n_theta, r0)
    sched = radius_schedule(r0, r0 * r0)
    radii = sched[(sched < r0) & (sched > r0 * r0) & (sched >= grid.spacing)]
    if cfg.radii:
        radii = np.array(sorted((r for r in cfg.radii if r0 * r0 < r < r0), reverse=True))
    if radii.size == 0:
        raise ConfigError("radius schedule is empty at this grid resolution")
    x = SpherePoint.from_vector(grid.xyz[0])
    caps = [Cap(x, r) for r in radii]
    masks = [c.contains(grid.xyz) for c in caps]
    bws = cfg.eps_factor * np.asarray(w(radii, cfg.alpha), dtype=float)

    def one(i):
        f = vector_field(s, cfg.d, (0, s.l_max), grid, replicate_seed(cfg.seed, i))
        tx = f.values[:, 0]
        osc = np.empty(radii.size)
        lt = np.empty(radii.size)
        for j, (c, m, bw) in enumerate(zip(caps, masks, bws)):
            v = f.values[:, m]
            osc[j] = kernels.max_pairwise_distance(np.ascontiguousarray(v.T))
            lt[j] = local_time_estimate(f, tx, c, bw, warn=False).value
        return osc, lt

    res = _replicate_map(one, cfg.replicates, cfg.threads)
    osc = np.array([r[0] for r in res])
    lt = np.array([r[1] for r in res])
    freq = smooth_event_frequencies(osc, lt, radii, cfg.c_grid, cfg.alpha, cfg.d)
    bound = 1.0 - 1.0 / math.log(r0) ** 2
    rows = [(c, f_, bound) for c, f_ in zip(cfg.c_grid, freq)]
    rec.outputs["smooth_event"] = write_table(_out(cfg, "smooth-event"),
                                              ["C", "frequency", "bound"], rows, cfg)
    meets = [c for c, f_ in zip(cfg.c_grid, freq) if f_ >= bound]
    rec.summary = {"radii": radii.tolist(), "bound": bound, "frequency": freq.tolist(),
                   "fitted_C": min(meets) if meets else None,
                   "best_frequency": float(freq.max())}
    return _finish(rec, cfg, t0)


# ---------------------------------------------------------------------------
# theory verification

def theory_header(alphas, ds, radius=0.5, l_max=1024):
    """Predicted dimension, hitting and capacity sign for each (alpha, d)."""
    cap = Cap(SpherePoint(0.5, 0.5), radius)
    out = []
    for a in alphas:
        m = CovarianceModel(normalize(condition_a_spectrum(a, l_max=l_max)))
        for d in ds:
            hit = nonempty_level_set_predicted(a, d)
            cap_val, _ = capacity_estimate(m, d, cap)
            out.append({"alpha": float(a), "d": int(d),
                        "criterion": 4.0 - (a - 2.0) * d,
                        "predicted_dimension": predicted_dimension(a, d) if hit else None,
                        "hitting_predicted": bool(hit), "capacity": float(cap_val)})
    return out


def load_schema(name="report.schema.json"):
    here = os.path.join(os.path.dirname(__file__), "schemas", name)
    with open(here, encoding="utf-8") as fh:
        return json.load(fh)


def validate_report(report):
    import jsonschema
    jsonschema.validate(report, load_schema())


def cmd_verify_theory(cfg: ExperimentConfig) -> RunRecord:
    """
    Run the acceptance checks and write a JSON report and a CSV summary.

    Exit code 1 when a hard check fails or a statistical check lands far
    outside its tolerance; other statistical failures are warnings.
    """
    from .verification import HARD, run_criteria
    t0 = time.perf_counter()
    rec = _prepare(cfg, "verify-theory")
    alphas = cfg.alphas or [cfg.alpha]
    header = theory_header(alphas, cfg.d_values)
    results = run_criteria(sorted(set(cfg.criteria)), scale=cfg.scale)
    crit = []
    for r in results:
        d = r.to_dict()
        rec.timings[f"criterion_{r.number}"] = d.pop("runtime")
        crit.append(d)
    hard_fail = any(not r.passed and (r.severity == HARD or r.far) for r in results)
    report = {"config_hash": cfg.hash, "seed": cfg.seed, "version": VERSION,
              "scale": cfg.scale, "header": header, "criteria": crit,
              "exit_code": 1 if hard_fail else 0}
    report = _jsonable(report)
    validate_report(report)
    _write_json(_out(cfg, "verify", "json"), report)
    rows = [(r.number, r.name, r.severity, r.passed, r.far) for r in results]
    rec.outputs["report"] = _out(cfg, "verify", "json")
    rec.outputs["summary"] = write_table(_out(cfg, "verify"),
                                         ["criterion", "name", "severity", "passed", "far"],
                                         rows, cfg)
    rec.summary = {"passed": [r.number for r in results if r.passed],
                   "failed": [r.number for r in results if not r.passed],
                   "lines": [r.line() for r in results]}
    rec.exit_code = report["exit_code"]
    return _finish(rec, cfg, t0)


# ---------------------------------------------------------------------------
# report bundle

_REPORT_KEYS = {
    "dimension": ["alpha", "d", "replicate", "slope", "predicted"],
    "hitting": ["alpha", "d", "eps", "frequency", "ci_low", "ci_high"],
    "energy": ["alpha", "d", "gamma", "shell", "increment", "cumulative"],
}
_REPORT_NAMES = {
    "dimension": "dimension_vs_prediction.csv",
    "hitting": "hitting_vs_d.csv",
    "energy": "energy_traces.csv",
}


def _sort_key(row):
    out = []
    for v in row:
        try:
            out.append((0, float(v), ""))
        except ValueError:
            out.append((1, 0.0, v))
    return out


def cmd_report(cfg: ExperimentConfig) -> RunRecord:
    """
    Aggregate earlier run tables into plot-ready CSVs under ``out/report``.

    Rows are sorted before writing, so the bundle does not depend on the
    order in which input files are found.
    """
    t0 = time.perf_counter()
    os.makedirs(cfg.out, exist_ok=True)
    rec = RunRecord("report", cfg.hash, cfg.seed)
    found = {k: sorted(glob.glob(os.path.join(cfg.out, pat))) for k, pat in REPORT_INPUTS.items()}
    if not any(found.values()):
        expected = ", ".join(REPORT_INPUTS.values())
        raise InputMissingError(f"no run tables in {cfg.out}; expected files matching {expected}")
    dest = os.path.join(cfg.out, "report")
    os.makedirs(dest, exist_ok=True)
    for kind, paths in found.items():
        if not paths:
            rec.summary.setdefault("missing", []).append(REPORT_INPUTS[kind])
            continue
        cols = _REPORT_KEYS[kind] + ["config_hash", "seed"]
        rows = []
        for p in paths:
            for r in read_table(p):
                rows.append([r[c] for c in cols])
        rows.sort(key=_sort_key)
        path = os.path.join(dest, _REPORT_NAMES[kind])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(cols)
            wr.writerows(rows)
        rec.outputs[kind] = path
        rec.summary[kind] = len(rows)
    return _finish(rec, cfg, t0)


COMMANDS = {
    "simulate": cmd_simulate,
    "covariance": cmd_covariance,
    "variogram": cmd_variogram,
    "slnd": cmd_slnd,
    "localtime": cmd_localtime,
    "levelset": cmd_levelset,
    "dimension": cmd_dimension,
    "capacity": cmd_capacity,
    "hitting": cmd_hitting,
    "oscillation-tail": cmd_oscillation_tail,
    "smooth-event": cmd_smooth_event,
    "verify-theory": cmd_verify_theory,
    "report": cmd_report,
}


def run(command, cfg: ExperimentConfig) -> RunRecord:
    if command not in COMMANDS:
        raise KeyError(f"unknown command {command!r}")
    return COMMANDS[command](cfg)
