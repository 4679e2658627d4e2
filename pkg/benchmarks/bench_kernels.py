"""Benchmark the compiled kernels against the pure backend.

Usage:
    python benchmarks/bench_kernels.py [--quick]

Times DBSCAN labeling on LiDAR-like scenes and the assignment solver on
dense cost matrices, then prints a table with speedups. Both backends must
produce identical output; that is asserted on every case.
"""

import argparse
import time

import numpy as np

from stssl import _kernels
from stssl._kernels import pure


def lidar_like_scene(rng, n_points):
    """Ring-road style scene: a ground disc plus a handful of blobs."""
    n_ground = int(n_points * 0.7)
    radius = np.sqrt(rng.uniform(0.0, 1.0, n_ground)) * 40.0
    phi = rng.uniform(0.0, 2 * np.pi, n_ground)
    ground = np.stack(
        [radius * np.cos(phi), radius * np.sin(phi), rng.normal(0, 0.02, n_ground)], axis=1
    )
    blobs = []
    n_left = n_points - n_ground
    n_blobs = 24
    for k in range(n_blobs):
        center = np.array([rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(0.5, 1.5)])
        m = n_left // n_blobs if k < n_blobs - 1 else n_left - (n_blobs - 1) * (n_left // n_blobs)
        blobs.append(center + rng.normal(0, 0.4, (m, 3)))
    return np.concatenate([ground] + blobs)


def timed(fn, *args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return result, best


def bench_dbscan(rng, sizes):
    rows = []
    for n in sizes:
        pts = lidar_like_scene(rng, n)
        labels_pure, t_pure = timed(pure.dbscan_labels, pts, 0.3, 8)
        if _kernels.HAVE_COMPILED:
            from stssl._kernels import _core

            labels_core, t_core = timed(_core.dbscan_labels, pts, 0.3, 8)
            assert np.array_equal(labels_pure, labels_core), "backend mismatch"
        else:
            t_core = float("nan")
        rows.append((f"dbscan n={n}", t_pure, t_core))
    return rows


def bench_lsap(rng, sizes):
    rows = []
    for n in sizes:
        cost = rng.uniform(0.0, 100.0, (n, n))
        (rp, cp), t_pure = timed(pure.solve_lsap, cost)
        if _kernels.HAVE_COMPILED:
            from stssl._kernels import _core

            (rc, cc), t_core = timed(_core.solve_lsap, cost)
            assert np.array_equal(rp, rc) and np.array_equal(cp, cc), "backend mismatch"
        else:
            t_core = float("nan")
        rows.append((f"lsap {n}x{n}", t_pure, t_core))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    if args.quick:
        dbscan_sizes = [5_000, 20_000]
        lsap_sizes = [50, 200]
    else:
        dbscan_sizes = [10_000, 50_000, 120_000]
        lsap_sizes = [50, 200, 500]

    print(f"compiled backend available: {_kernels.HAVE_COMPILED}")
    rows = bench_dbscan(rng, dbscan_sizes) + bench_lsap(rng, lsap_sizes)
    print(f"{'case':<18} {'pure (s)':>10} {'compiled (s)':>13} {'speedup':>9}")
    for name, t_pure, t_core in rows:
        speed = t_pure / t_core if t_core == t_core and t_core > 0 else float("nan")
        print(f"{name:<18} {t_pure:>10.4f} {t_core:>13.4f} {speed:>8.1f}x")


if __name__ == "__main__":
    main()
