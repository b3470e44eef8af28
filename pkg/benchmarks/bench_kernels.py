"""Timing comparison: numba-compiled kernels vs the numpy fallbacks.

Runs the three hot kernels (cost-sensitive split search, Gini split
search, batched tree routing) over growing workloads and prints the
per-call time of each backend plus the speedup. The numpy path is what
you get with CSHC_NUMBA=0; numba must be importable for its side.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from cshc import kernels


def timed(fn, args, repeats):
    fn(*args)  # warm-up (and JIT compile on the numba side)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def split_workload(rng, S, F, n):
    vals = np.ascontiguousarray(rng.uniform(0, 10, size=(S, F)))
    mult = rng.integers(1, 4, size=S).astype(np.float64)
    wc = np.ascontiguousarray(
        rng.integers(0, 2, size=(S, n)).astype(np.float64) * mult[:, None])
    return vals, wc, mult, 2.0


def gini_workload(rng, S, F, C):
    vals = np.ascontiguousarray(rng.uniform(0, 10, size=(S, F)))
    labels = rng.integers(0, C, size=S)
    return vals, labels, C


def route_workload(rng, Q, depth=12):
    # random full binary tree of the given depth over 8 features
    n_internal = 2 ** depth - 1
    n_nodes = 2 ** (depth + 1) - 1
    feat = np.full(n_nodes, -1, dtype=np.int64)
    thr = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    leaf_id = np.full(n_nodes, -1, dtype=np.int64)
    for i in range(n_internal):
        feat[i] = rng.integers(0, 8)
        thr[i] = rng.uniform(0, 1)
        left[i] = 2 * i + 1
        right[i] = 2 * i + 2
    leaves = np.nonzero(left < 0)[0]
    leaf_id[leaves] = np.arange(leaves.size)
    X = np.ascontiguousarray(rng.uniform(0, 1, size=(Q, 8)))
    return feat, thr, left, right, leaf_id, X


def report(name, np_time, nb_time):
    print("%-34s numpy %10.4f ms   numba %10.4f ms   speedup %5.2fx"
          % (name, np_time * 1e3, nb_time * 1e3, np_time / nb_time))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if kernels.nb_best_split is None:
        raise SystemExit("numba backend unavailable (is CSHC_NUMBA=0 set?)")
    rng = np.random.default_rng(0)
    print("cost-split search (S members, F features, n classifiers)")
    for S, F, n in [(50, 6, 5), (500, 12, 5), (5000, 30, 10)]:
        w = split_workload(rng, S, F, n)
        report("  S=%d F=%d n=%d" % (S, F, n),
               timed(kernels.np_best_split, w, args.repeats),
               timed(kernels.nb_best_split, w, args.repeats))
    print("gini split search (S samples, F features, C classes)")
    for S, F, C in [(100, 6, 2), (2000, 20, 5), (10000, 40, 10)]:
        w = gini_workload(rng, S, F, C)
        report("  S=%d F=%d C=%d" % (S, F, C),
               timed(kernels.np_gini_split, w, args.repeats),
               timed(kernels.nb_gini_split, w, args.repeats))
    print("tree routing (Q queries, depth-12 tree)")
    for Q in [100, 10000, 200000]:
        w = route_workload(rng, Q)
        report("  Q=%d" % Q,
               timed(kernels.np_route, w, args.repeats),
               timed(kernels.nb_route, w, args.repeats))


if __name__ == "__main__":
    main()
