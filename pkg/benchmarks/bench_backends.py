"""Compare the numba and numpy backends of the hot kernels.

Usage: python benchmarks/bench_backends.py [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from mpsexc import kernels
from mpsexc.glauber import tau_table
from mpsexc.models import aklt_family, pauli_tensor
from mpsexc.parent import local_term


def cases():
    rng = np.random.default_rng(0)
    A = pauli_tensor().matrices
    for N in (8, 10):
        T = np.broadcast_to(A, (N,) + A.shape).copy()
        yield f"word_amplitudes pauli N={N}", lambda b, T=T: kernels.word_amplitudes(T, backend=b)
    h = local_term(aklt_family(2 / 3), 2).h
    for N in (10, 12):
        psi = rng.standard_normal(3**N) + 0j
        yield f"local_sum aklt L=2 N={N}", lambda b, psi=psi, N=N: kernels.local_sum(psi, h, N, 3, backend=b)
    rates = tau_table(0.5).validate()
    M, N = 20_000, 32
    occ = np.zeros((M, N), np.uint8)
    occ[:, 0] = 1
    snaps = np.linspace(0.5, 4.0, 8)
    u = rng.random((M, 3 * 64))
    yield f"gillespie M={M} N={N}", lambda b: kernels.gillespie(occ, rates, 4.0, snaps, u, backend=b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, fn in cases():
        fn("numba")  # compile outside the timing
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in ("numba", "numpy")}
        print(f"{name:34s} {t['numba']:10.4f} {t['numpy']:10.4f} {t['numpy'] / t['numba']:8.1f}")


if __name__ == "__main__":
    main()
