"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Prints one line per (kernel, size) with the best time of each path and the
speed-up.  The first compiled call (JIT or cache load) is excluded.
"""
from __future__ import annotations

import argparse
import time

import numpy as np
import scipy.sparse as sp

from magbottle.eigencount import _band_storage, rcm_band
from magbottle.discrete import DiscreteOperator
from magbottle.kernels import band_inertia, sturm_count


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def banded_case(n, bw, seed):
    rng = np.random.default_rng(seed)
    diags = [rng.normal(size=n) * 4]
    offs = [0]
    for d in range(1, bw + 1):
        diags.append(rng.normal(size=n - d) + 1j * rng.normal(size=n - d))
        offs.append(-d)
    lower = sp.diags(diags[1:], offs[1:], shape=(n, n))
    a = sp.diags(diags[0], 0, shape=(n, n)) + lower + lower.conj().T
    op = DiscreteOperator.from_matrix(a.tocsr())
    perm, width = rcm_band(op)
    return _band_storage(op.matrix, perm, width, 0.0)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args(argv)

    band_sizes = [(2000, 10), (20000, 20)] if args.quick else [(2000, 10), (20000, 20), (100000, 40)]
    sturm_sizes = [(2000, 50), (20000, 200)] if args.quick else [(2000, 50), (20000, 200), (100000, 400)]

    print(f"{'kernel':<14}{'size':>18}{'numba s':>12}{'numpy s':>12}{'speedup':>10}  agree")
    for n, bw in band_sizes:
        ab = banded_case(n, bw, seed=n)
        band_inertia(ab.copy(), compiled=True)  # warm-up
        tj, rj = best_of(lambda: band_inertia(ab.copy(), compiled=True), args.repeat)
        tn, rn = best_of(lambda: band_inertia(ab.copy(), compiled=False), max(1, args.repeat // 2))
        print(f"{'band_inertia':<14}{f'n={n},bw={bw}':>18}{tj:12.4f}{tn:12.4f}{tn / tj:10.1f}  {rj[0] == rn[0]}")

    for n, m in sturm_sizes:
        rng = np.random.default_rng(n)
        d = rng.normal(size=n) * 3
        e = rng.normal(size=n - 1)
        lams = np.linspace(-6, 6, m)
        sturm_count(d, e, lams, compiled=True)
        tj, rj = best_of(lambda: sturm_count(d, e, lams, compiled=True), args.repeat)
        tn, rn = best_of(lambda: sturm_count(d, e, lams, compiled=False), max(1, args.repeat // 2))
        print(f"{'sturm_count':<14}{f'n={n},m={m}':>18}{tj:12.4f}{tn:12.4f}{tn / tj:10.1f}  {np.array_equal(rj, rn)}")


if __name__ == "__main__":
    main()
