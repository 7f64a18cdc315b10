#!/usr/bin/env python3
"""Benchmark the compiled stepping kernels against the NumPy fallback.

Times the three hot ensemble kernels on representative problem sizes and
prints the per-step-per-trajectory cost and speedup.  Run as

    python benchmarks/bench_backends.py [--n 10000] [--steps 400]
"""

import argparse
import time

import numpy as np

from trajkit.backend import available_backends


def bench(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10_000, help="trajectories")
    ap.add_argument("--steps", type=int, default=400, help="time steps per call")
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not available; benchmarking fallback only")
    n, m, dt = args.n, args.steps, 1e-3
    rng = np.random.default_rng(0)
    r = rng.standard_normal(m) / np.sqrt(dt)
    dn = rng.standard_normal((n, m)) * np.sqrt(dt)

    def qtraj_case(mod):
        c = np.tile(np.array([0.41, 0.1, 0.9 + 0.1j]) / 1.0, (n, 1)).astype(complex)
        c /= np.linalg.norm(c, axis=1)[:, None]
        logw = np.zeros(n)
        return lambda: mod.qtraj_ostensible_segment(c, logw, r, dn, dt, 0.5, 1.0,
                                                    0.0, 0.0, False)

    def classical_case(mod):
        x = rng.standard_normal(n).copy()
        logw = np.zeros(n)
        return lambda: mod.classical_particles_segment(x, logw, r, dn, dt, 1.0, 1.0,
                                                       1.0, 1.0, 0.0, 0.0, 0.0)

    def hybrid_case(mod):
        psi = np.tile(np.array([0.0, 1.0], dtype=complex), (n, 1))
        x = rng.standard_normal(n).copy()
        logw = np.zeros(n)
        return lambda: mod.hybrid_segment(psi, x, logw, r, dn, dt, 5.0, 1.0, 2.0,
                                          0.5, 0.0, 0.0, True)

    cases = {
        "three-level ostensible SSE": qtraj_case,
        "classical weighted particles": classical_case,
        "hybrid trajectory (adaptive)": hybrid_case,
    }
    print(f"n = {n} trajectories, {m} steps per call\n")
    header = f"{'kernel':34s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}"
    print(header)
    for label, make in cases.items():
        times = {}
        for bname, mod in backends.items():
            times[bname] = bench(make(mod))
        row = f"{label:34s}"
        for bname in backends:
            per = times[bname] / (n * m) * 1e9
            row += f"{per:10.1f}ns"
        if len(times) == 2:
            row += f"{times['python'] / times['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
