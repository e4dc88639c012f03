"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Both implementations are imported directly from flowcut.kernels, so the
FLOWCUT_NUMBA flag does not matter here. The eigensolver fallback is LAPACK
(numpy.linalg.eigh), so that row compares the hand-written tred2/tql2 against it.
"""
import argparse
import time

import numpy as np

from flowcut import kernels as K
from flowcut._accel import HAVE_NUMBA


def best_of(fn, repeat):
    fn()  # warm-up (jit compile on first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    H, W = 128, 256
    Ix, Iy, c = (rng.standard_normal((H, W)) * 0.1 for _ in range(3))
    u0, v0 = np.zeros((H, W)), np.zeros((H, W))
    yield "hs_jacobi 128x256 x100", lambda f: (lambda: f(Ix, Iy, c, u0.copy(), v0.copy(), 0.1, 100)), \
        (K._hs_jacobi_nb, K._hs_jacobi_np)

    xp = rng.standard_normal((130, 258, 16))
    w = rng.standard_normal((3, 3, 16, 16)) * 0.1
    b = np.zeros(16)
    yield "conv3x3 fwd 128x256 16->16", lambda f: (lambda: f(xp, w, b)), \
        (K._conv3x3_forward_nb, K._conv3x3_forward_np)
    g = rng.standard_normal((128, 256, 16))
    yield "conv3x3 bwd 128x256 16->16", lambda f: (lambda: f(xp, w, g)), \
        (K._conv3x3_backward_nb, K._conv3x3_backward_np)

    A = rng.standard_normal((512, 512))
    A = A + A.T
    yield "symmetric eigh 512x512", lambda f: (lambda: f(A, 60)), (K._eigh_nb, K._eigh_np)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not installed; the numba column runs the python fallback")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, make, (nb, npy) in cases(rng):
        t_nb = best_of(make(nb), args.repeat)
        t_np = best_of(make(npy), args.repeat)
        print(f"{name:32s} {t_nb * 1e3:9.2f}ms {t_np * 1e3:9.2f}ms {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
