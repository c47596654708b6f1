"""Compare the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the AGC_KERNELS flag is not
needed here.  The first numba call of each kernel is timed separately
as compile/cache-load time.
"""

import argparse
import time

import numpy as np

from agc.kernels import numba_impl, numpy_impl


def competing_rules(n_objects: int):
    # three rules fight over a and b, so every pick goes through the RNG
    lhs = np.array([[1, 0, 0], [1, 1, 0], [0, 1, 1]], dtype=np.int64)
    counts = np.array([n_objects // 2, n_objects // 2, n_objects // 4], dtype=np.int64)
    enabled = np.ones(3, dtype=np.bool_)
    return lhs, counts, enabled, 12345


def refinement_input(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    adj = [[] for _ in range(n)]
    for v in range(1, n):
        u = int(rng.integers(v))
        w = int(rng.integers(3))
        adj[u].append((v, w))
        adj[v].append((u, w))
    indptr = np.cumsum([0] + [len(a) for a in adj]).astype(np.int64)
    nbr = np.array([v for a in adj for v, _ in a], dtype=np.int64)
    wcls = np.array([w for a in adj for _, w in a], dtype=np.int64)
    colors = rng.integers(0, 2, n).astype(np.int64)
    return colors, indptr, nbr, wcls


def component_input(n: int, m: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return n, rng.integers(0, n, m).astype(np.int64), rng.integers(0, n, m).astype(np.int64)


def best_of(fn, args, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cases = [
        ("greedy_applications, 1M objects", "greedy_applications", competing_rules(1_000_000)),
        ("refine_partition, 64 atoms", "refine_partition", refinement_input(64)),
        ("refine_partition, 2000 atoms", "refine_partition", refinement_input(2000)),
        ("component_labels, 100k nodes", "component_labels", component_input(100_000, 80_000)),
    ]
    print(f"{'kernel':36s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s} {'first call':>11s}")
    for title, name, inputs in cases:
        ref = getattr(numpy_impl, name)(*inputs)
        t_np = best_of(getattr(numpy_impl, name), inputs, args.repeat)
        if numba_impl is None:
            print(f"{title:36s} {t_np * 1e3:9.2f}ms {'n/a':>10s}")
            continue
        fast = getattr(numba_impl, name)
        t0 = time.perf_counter()
        got = fast(*inputs)
        first = time.perf_counter() - t0
        assert np.array_equal(got, ref), f"{name}: backends disagree"
        t_nb = best_of(fast, inputs, args.repeat)
        print(f"{title:36s} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms {t_np / t_nb:7.1f}x {first * 1e3:9.1f}ms")


if __name__ == "__main__":
    main()
