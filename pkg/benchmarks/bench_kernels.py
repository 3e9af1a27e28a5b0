"""Time the compiled and numpy log-likelihood kernels on MLE-sized workloads.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per workload with the best-of-N time of each backend, the
speed-up and the largest difference between their outputs, over all nodes
and over nodes within 50 nats of the maximum (the ones an MLE can select).
"""
import argparse
import math
import timeit

import numpy as np

from freqest import _kernels_py, kernels

try:
    from freqest import _kernels as compiled
except ImportError:
    compiled = None

WORKLOADS = [
    # (label, nodes, measurements, longest time)
    ("warm-up grid", 10_000, 15, 15 * math.pi),
    ("fixed N=100", 10_000, 100, math.pi),
    ("linear N=124", 10_000, 124, 124 * math.pi),
    ("refine window", 257, 124, 2e6),
]


def case(nodes, m, t_max, seed=0):
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0, t_max, m))
    a = kernels.signed_contrast(rng.integers(0, 2, m), times)
    step = 1.0 / nodes
    return 0.5 * step, step, times, a, nodes


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        print("compiled kernels are not built; only the numpy backend is available")
    print(f"{'workload':<16}{'numpy ms':>11}{'compiled ms':>13}{'speed-up':>10}{'max |diff|':>12}{'near peak':>11}")
    for label, nodes, m, t_max in WORKLOADS:
        start, step, times, a, n = case(nodes, m, t_max)
        out_p = np.zeros(n)
        _kernels_py.loglik_accumulate_uniform(start, step, times, a, out_p)
        tp = best_time(lambda: _kernels_py.loglik_accumulate_uniform(start, step, times, a, np.zeros(n)), args.repeat)
        if compiled is None:
            print(f"{label:<16}{tp * 1e3:>11.2f}{'-':>13}{'-':>10}{'-':>12}{'-':>11}")
            continue
        out_c = np.zeros(n)
        compiled.loglik_accumulate_uniform(start, step, times, a, out_c)
        tc = best_time(lambda: compiled.loglik_accumulate_uniform(start, step, times, a, np.zeros(n)), args.repeat)
        ok = np.isfinite(out_p)
        diff = np.abs(out_c - out_p)
        near = ok & (out_p >= out_p[ok].max() - 50.0)
        worst = float(np.max(diff[ok], initial=0.0))
        worst_near = float(np.max(diff[near], initial=0.0))
        print(f"{label:<16}{tp * 1e3:>11.2f}{tc * 1e3:>13.2f}{tp / tc:>9.1f}x{worst:>12.1e}{worst_near:>11.1e}")


if __name__ == "__main__":
    main()
