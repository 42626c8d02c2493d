"""Compare the compiled and numpy statevector kernels.

Usage: python3 benchmarks/bench_kernels.py [--batch 256] [--repeat 5]

Times the three kernels on a (batch, 32) state array, then one forward pass
and one parameter-shift gradient of a 6-block core circuit under each backend.
"""

from __future__ import annotations

import argparse
import timeit
from contextlib import contextmanager

import numpy as np

from qensemble import kernels
from qensemble._kernels_py import apply_1q as py_1q, apply_cnot as py_cnot, expect_z as py_z
from qensemble.circuits import build_core_variant, evaluate
from qensemble.optim import parameter_shift_grad
from qensemble.statevector import rot3_matrix

try:
    from qensemble import _kernels as compiled
except ImportError:
    compiled = None

BACKENDS = {"numpy": (py_1q, py_cnot, py_z)}
if compiled is not None:
    BACKENDS["cython"] = (compiled.apply_1q, compiled.apply_cnot, compiled.expect_z)


@contextmanager
def use_backend(name):
    saved = kernels.apply_1q, kernels.apply_cnot, kernels.expect_z
    kernels.apply_1q, kernels.apply_cnot, kernels.expect_z = BACKENDS[name]
    try:
        yield
    finally:
        kernels.apply_1q, kernels.apply_cnot, kernels.expect_z = saved


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n, dim = 5, 32
    states = rng.normal(size=(args.batch, dim)) + 1j * rng.normal(size=(args.batch, dim))
    mats = np.ascontiguousarray(rot3_matrix(*rng.uniform(-3, 3, size=(3, args.batch))))
    spec = build_core_variant("V3", 6)
    params = rng.uniform(0, 1, spec.num_params)
    feats = rng.normal(size=(args.batch, dim))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    grad_rows = min(50, args.batch)
    labels = np.where(rng.random((grad_rows, 3)) < 0.5, -1.0, 1.0)

    rows = []
    for name, (k1, kc, kz) in BACKENDS.items():
        work = states.copy()
        t_1q = best_of(lambda: k1(work, 2, n, mats), args.repeat, 50)
        t_cx = best_of(lambda: kc(work, 1, 3, n), args.repeat, 50)
        t_z = best_of(lambda: kz(work, 4, n), args.repeat, 50)
        with use_backend(name):
            t_fwd = best_of(lambda: evaluate(spec, params, feats), args.repeat, 3)
            t_grad = best_of(lambda: parameter_shift_grad(spec, params, feats[:grad_rows], labels, (0, 1, 2)),
                             args.repeat, 1)
        rows.append((name, t_1q, t_cx, t_z, t_fwd, t_grad))

    print(f"batch={args.batch}, 5 qubits, V3 with 6 blocks ({spec.num_params} params); best of {args.repeat}")
    header = ("backend", "rot3 [us]", "cnot [us]", "expZ [us]", "forward [ms]", "grad@50 [ms]")
    print("".join(f"{h:>14}" for h in header))
    for name, a, b, c, d, e in rows:
        print(f"{name:>14}{a * 1e6:>14.1f}{b * 1e6:>14.1f}{c * 1e6:>14.1f}{d * 1e3:>14.2f}{e * 1e3:>14.1f}")
    if len(rows) == 2:
        base, fast = rows[0], rows[1]
        print("speedup" + "".join(f"{base[i] / fast[i]:>13.1f}x" for i in range(1, 6)))


if __name__ == "__main__":
    main()
