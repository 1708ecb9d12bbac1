"""Time the compiled and numpy kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from hfbandit import kernels


def comparison_counts(dim, n, rng):
    truth = rng.uniform(-1, 1, dim)
    i0 = rng.integers(0, dim, n)
    i1 = (i0 + rng.integers(1, dim, n)) % dim
    y = rng.random(n) < 1 / (1 + np.exp(-(truth[i1] - truth[i0])))
    keys, inv = np.unique(np.stack([i0, i1], 1), axis=0, return_inverse=True)
    inv = inv.ravel()
    wins = np.bincount(inv, weights=y, minlength=len(keys))
    totals = np.bincount(inv, minlength=len(keys)).astype(float)
    return keys[:, 0].astype(np.int64), keys[:, 1].astype(np.int64), wins, totals


def cases(rng):
    v = rng.normal(0, 2, 64)
    i0, i1, wins, totals = comparison_counts(16, 4000, rng)
    M = rng.normal(size=(12, 12))
    sigma = M @ M.T / 12
    w = rng.normal(size=12)
    c = kernels.project_sum_zero_box(rng.normal(size=12), 1.0)
    L = 2 * float(np.linalg.eigvalsh(sigma)[-1])
    return {
        "project_sum_zero_box (dim 64)": lambda k: k.project_sum_zero_box(v, 1.0),
        "mle_pga (dim 16, 4000 comparisons)": lambda k: k.mle_pga(i0, i1, wins, totals, 16, 1.0, 1.0, 2000, 1e-8, False),
        "box_qp (dim 12)": lambda k: k.box_qp(w, c, sigma, 1.0, 1.0, c, L, 5000, 1e-9),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    names = sorted(kernels.BACKENDS)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':40s}" + "".join(f"{n:>14s}" for n in names) + ("      speedup" if len(names) > 1 else ""))
    for label, fn in cases(rng).items():
        times = {}
        for name in names:
            mod = kernels.BACKENDS[name]
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-6)))
            times[name] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
        row = f"{label:40s}" + "".join(f"{times[n] * 1e3:12.3f}ms" for n in names)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:12.1f}x"
        print(row)


if __name__ == "__main__":
    main()
