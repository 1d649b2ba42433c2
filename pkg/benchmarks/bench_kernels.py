"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--variants 2000] [--k 3]

Times the three hot paths the scan and the simulations lean on: the batched
USAT p-value, dosage-line parsing and Liu tail/quantile evaluation. Reports
microseconds per call for each backend and the speed-up.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mvassoc._backend import compiled_kernels, python_kernels


def _time(fn, reps: int) -> float:
    fn()  # warm-up
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best / reps * 1e6


def _cases(m: int, k: int, n: int, seed: int):
    rng = np.random.default_rng(seed)
    base = np.sort(rng.gamma(2.0, 1.0, k))
    base /= base.sum()
    xtx = rng.uniform(0.3, 1.0, m) * n * 0.4
    t_m = rng.chisquare(k, m)
    t_s = rng.chisquare(k, m) * xtx * base.mean()
    grid = np.linspace(0.0, 1.0, 11)
    line = ("\t".join(str(v) for v in rng.integers(0, 3, n)) + "\n").encode()
    eigs = base * 1000.0
    pars = python_kernels.liu_params(eigs)
    ts = np.linspace(0.5, 30.0, m) * eigs.sum() / k
    probs = np.geomspace(1e-12, 0.5, m)
    return base, xtx, t_m, t_s, grid, line, pars, ts, probs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", type=int, default=2000)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--n", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    fast = compiled_kernels()
    if fast is None:
        print("compiled extension not built; only the Python backend is available")
    base, xtx, t_m, t_s, grid, line, pars, ts, probs = _cases(args.variants, args.k, args.n, args.seed)
    m = args.variants
    m_py = max(m // 20, 20)  # the Python USAT path is slow; time a subset
    out = np.empty(args.n)

    def usat(mod, count):
        return lambda: mod.usat_batch(base, xtx[:count], t_m[:count], t_s[:count], grid)

    def parse(mod, count):
        def run():
            for _ in range(count):
                mod.parse_dosages(line, args.n, out)
        return run

    def liu_sf(mod, count):
        return lambda: mod.liu_sf_array(*pars, ts[:count])

    def liu_isf(mod, count):
        def run():
            for p in probs[:count]:
                mod.liu_isf(*pars, p)
        return run

    rows = [
        ("usat_batch (per variant)", usat, m_py, m),
        (f"parse_dosages (n={args.n}, per line)", parse, 20, 200),
        ("liu_sf (per point)", liu_sf, m, m),
        ("liu_isf (per quantile)", liu_isf, m_py, m),
    ]
    print(f"{'kernel':40s} {'python us':>12s} {'cython us':>12s} {'speed-up':>9s}")
    for name, make, n_py, n_c in rows:
        py = _time(make(python_kernels, n_py), n_py)
        if fast is None:
            print(f"{name:40s} {py:12.2f} {'-':>12s} {'-':>9s}")
            continue
        cy = _time(make(fast, n_c), n_c)
        print(f"{name:40s} {py:12.2f} {cy:12.2f} {py / cy:8.1f}x")

    if fast is not None:
        a = fast.usat_batch(base, xtx[:m_py], t_m[:m_py], t_s[:m_py], grid)[2]
        b = python_kernels.usat_batch(base, xtx[:m_py], t_m[:m_py], t_s[:m_py], grid)[2]
        print(f"max relative USAT p-value difference between backends: {np.max(np.abs(a - b) / b):.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
