"""
Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import timeit

import numpy as np

from spherefield import kernels
from spherefield.geometry import EquiangularGrid, NORTH, SOUTH


def cases(rng):
    coef = rng.random(1025)
    x = np.cos(np.linspace(0.0, math.pi, 4000))
    theta = np.linspace(1e-4, math.pi, 4000)
    l_max = 256
    alm = (rng.standard_normal((l_max + 1, l_max + 1))
           + 1j * rng.standard_normal((l_max + 1, l_max + 1)))
    rows = np.linspace(0.01, math.pi - 0.01, 64)
    vals = np.ascontiguousarray(rng.standard_normal((800, 2)))
    g = EquiangularGrid(128, 256)
    xyz = np.ascontiguousarray(g.xyz)
    labels = np.where(xyz[:, 2] >= 0.0, 0, 1).astype(np.int64)
    order = np.argsort(labels, kind="stable").astype(np.int64)
    offsets = np.array([0, (labels == 0).sum(), labels.size], dtype=np.int64)
    parents = np.array([NORTH.xyz, SOUTH.xyz])
    return {
        "legendre_series": lambda b: b.legendre_series(coef, x),
        "legendre_gap_series": lambda b: b.legendre_gap_series(coef, theta),
        "alm_rows": lambda b: b.alm_rows(alm, 0, l_max, rows),
        "max_pairwise_distance": lambda b: b.max_pairwise_distance(vals),
        "fps_pack": lambda b: b.fps_pack(xyz, order, offsets, parents, math.cos(0.125)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled backend unavailable; timing the fallback only")
    table = cases(np.random.default_rng(0))
    print(f"{'kernel':<24}" + "".join(f"{n:>12}" for n in backends) + f"{'speedup':>10}")
    for name, fn in table.items():
        times = {}
        for bname, b in backends.items():
            times[bname] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        line = f"{name:<24}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
