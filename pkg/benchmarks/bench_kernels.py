"""Timing comparison of the numba and numpy kernel paths.

The kernel module picks its implementation at import time from the
POGOSIM_NUMBA environment variable, so each path runs in a fresh
subprocess and this driver merges the two reports.

Usage: python3 benchmarks/bench_kernels.py [n_robots ...]
"""

import json
import os
import subprocess
import sys
import time

import numpy as np


def make_state(n, rng):
    side = 55.0 * np.sqrt(n) * 2.0  # ~18% disk fill, like a dense arena
    pos = rng.uniform(0.0, side, size=(n, 2))
    vel = rng.normal(0.0, 50.0, size=(n, 2))
    radius = np.full(n, 26.5)
    inv_mass = np.full(n, 1.0 / 0.2)
    rest = np.full(n, 0.1)
    fric = np.full(n, 0.3)
    k = max(3, int(np.sqrt(n)))
    theta = np.linspace(0.0, 2 * np.pi, 4 * k, endpoint=False)
    seg_pts = np.stack([side / 2 + side * np.cos(theta),
                        side / 2 + side * np.sin(theta)], axis=1)
    seg_a = seg_pts
    seg_b = np.roll(seg_pts, -1, axis=0)
    return pos, vel, radius, inv_mass, rest, fric, seg_a, seg_b


def bench_one(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_suite(sizes):
    from pogosim import kernels

    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        pos, vel, radius, inv_mass, rest, fric, seg_a, seg_b = make_state(n, rng)
        cutoff = 2 * 26.5

        pi, pj = kernels.sorted_pairs(pos, cutoff)  # also triggers JIT compile
        timings = {
            "pairs": bench_one(lambda: kernels.candidate_pairs(pos, cutoff)),
            "disk_impulses": bench_one(lambda: kernels.disk_impulses(
                pos, vel.copy(), radius, inv_mass, rest, fric, pi, pj)),
            "disk_corrections": bench_one(lambda: kernels.disk_corrections(
                pos.copy(), radius, inv_mass, pi, pj, 0.01, 0.8)),
            "wall_impulses": bench_one(lambda: kernels.wall_impulses(
                pos, vel.copy(), radius, seg_a, seg_b, rest, fric)),
            "wall_corrections": bench_one(lambda: kernels.wall_corrections(
                pos.copy(), radius, seg_a, seg_b, 0.01, 0.8)),
        }
        rows.append({"n": n, "pairs_found": int(len(pi)),
                     "numba": kernels.NUMBA_ENABLED, "timings": timings})
    return rows


def main():
    sizes = [int(a) for a in sys.argv[1:]] or [100, 500, 2000]
    results = {}
    for flag, label in (("1", "numba"), ("0", "numpy")):
        env = dict(os.environ, POGOSIM_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, __file__, "--worker"] + [str(s) for s in sizes],
            env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(out.stdout)
        active = results[label][0]["numba"]
        if label == "numba" and not active:
            print("note: numba unavailable, both columns use the numpy path")

    print(f"{'kernel':<18} {'n':>6} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    for row_nb, row_np in zip(results["numba"], results["numpy"]):
        for name in row_nb["timings"]:
            t_nb = row_nb["timings"][name] * 1e3
            t_np = row_np["timings"][name] * 1e3
            print(f"{name:<18} {row_nb['n']:>6} {t_nb:>12.3f} {t_np:>12.3f} "
                  f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    if len(sys.argv) > 1 and sys.argv[1] == "--worker":
        print(json.dumps(run_suite([int(a) for a in sys.argv[2:]])))
    else:
        main()
