"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--qubits 4 6 8 10] [--batch 64] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from qqm import kernels as K
from qqm._accel import USE_NUMBA


def cases(n, batch, rng):
    dim = 1 << n
    states = (rng.normal(size=(batch, dim)) + 1j * rng.normal(size=(batch, dim))).astype(np.complex128)
    op = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))).astype(np.complex128)
    g = K.rotation_matrix("Y", 0.3)
    q = n // 2
    return {
        "apply_1q": (lambda f: f(states, g, q), K.nb_apply_1q, K.np_apply_1q),
        "apply_cnot": (lambda f: f(states, 0, n - 1), K.nb_apply_cnot, K.np_apply_cnot),
        "conjugate_1q": (lambda f: f(op, g, q), K.nb_conjugate_1q, K.np_conjugate_1q),
        "conjugate_cnot": (lambda f: f(op, 0, n - 1), K.nb_conjugate_cnot, K.np_conjugate_cnot),
        "trace_product": (lambda f: f(op, op), K.nb_trace_product, K.np_trace_product),
    }


def best_of(call, repeat):
    return min(timeit.repeat(call, number=1, repeat=repeat))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--qubits", type=int, nargs="+", default=[4, 6, 8, 10])
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args()
    if not USE_NUMBA:
        print("numba disabled (QQM_DISABLE_NUMBA); timing the numpy backend only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'qubits':>7}{'numba [us]':>13}{'numpy [us]':>13}{'ratio':>9}")
    for n in args.qubits:
        for name, (call, nb, fb) in cases(n, args.batch, rng).items():
            t_np = best_of(lambda: call(fb), args.repeat) * 1e6
            if USE_NUMBA:
                call(nb)
                t_nb = best_of(lambda: call(nb), args.repeat) * 1e6
                print(f"{name:<16}{n:>7}{t_nb:>13.1f}{t_np:>13.1f}{t_np / t_nb:>9.2f}")
            else:
                print(f"{name:<16}{n:>7}{'-':>13}{t_np:>13.1f}{'-':>9}")


if __name__ == "__main__":
    main()
