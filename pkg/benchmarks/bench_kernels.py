#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--n-rays 2000000] [--n-samples 10000000]

The dispatchers in dieburst.kernels pick the numba path automatically; set
DIEBURST_DISABLE_NUMBA=1 to force the numpy path package-wide. This script
calls both variants explicitly regardless of the flag.
"""

import argparse
import time

import numpy as np

from dieburst import kernels


def timeit(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-rays", type=int, default=2_000_000)
    ap.add_argument("--n-samples", type=int, default=10_000_000)
    ap.add_argument("--n-bursts", type=int, default=200)
    args = ap.parse_args()

    if not kernels.numba_available():
        print("numba not importable; nothing to compare")
        return

    kernels.warm_up()
    rng = np.random.default_rng(0)
    rows = []

    # ray/box mask
    pts = rng.uniform(-5, 5, (args.n_rays, 3))
    dirs = rng.standard_normal((args.n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    bmin = np.array([-1.0, -1.0, -1.0])
    bmax = np.array([1.0, 1.0, 1.0])
    t_nb, m_nb = timeit(kernels.ray_hits_box_numba, pts, dirs, bmin, bmax, True)
    t_np, m_np = timeit(kernels.ray_hits_box_numpy, pts, dirs, bmin, bmax, True)
    assert np.array_equal(m_nb, m_np)
    rows.append(("ray_hits_box", args.n_rays, t_nb, t_np))

    # trigger scan
    dist = np.abs(rng.standard_normal(args.n_samples))
    dist[rng.integers(0, args.n_samples, 200)] += 8.0
    t_nb, r_nb = timeit(kernels.scan_triggers_numba, dist, 5.0, 2.5, 500)
    t_np, r_np = timeit(kernels.scan_triggers_numpy, dist, 5.0, 2.5, 500)
    assert all(np.array_equal(a, b) for a, b in zip(r_nb, r_np))
    rows.append(("scan_triggers", args.n_samples, t_nb, t_np))

    # burst superposition
    t0s = np.sort(rng.uniform(0, args.n_samples * 1e-6, args.n_bursts))
    amps = rng.lognormal(np.log(2e3), 0.5, args.n_bursts)
    taus = rng.lognormal(np.log(1e-3), 0.25, args.n_bursts)
    t_nb, s_nb = timeit(kernels.superpose_bursts_numba, args.n_samples, 1e-6, t0s, amps, taus)
    t_np, s_np = timeit(kernels.superpose_bursts_numpy, args.n_samples, 1e-6, t0s, amps, taus)
    assert np.allclose(s_nb, s_np, rtol=1e-12, atol=0.0)
    rows.append(("superpose_bursts", args.n_samples, t_nb, t_np))

    print(f"{'kernel':18s} {'size':>10s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, size, t_nb, t_np in rows:
        print(f"{name:18s} {size:10d} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
