"""Compare the compiled distance kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Times the per-step prototype scan, the epoch-level distance matrix, and a
short end-to-end training run under each backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from achords import _kernels_py

try:
    from achords import _kernels
except ImportError:
    _kernels = None

TRAIN_SNIPPET = """
import time
from achords.experiment import synth_sets
from achords.linalg import subspace_of_set
from achords.model import Hyperparameters, train
sets = synth_sets(3, 20, {D}, {d}, 50, 0.05, seed=0)
data = [(subspace_of_set(x, {d})[0], y) for x, y in sets]
t = time.perf_counter()
train(data, Hyperparameters(subspace_dim={d}, epochs=10, prototypes_per_class=3))
print(time.perf_counter() - t)
"""


def _stack(rng, n, D, d):
    return np.stack([np.linalg.qr(rng.standard_normal((D, d)))[0] for _ in range(n)])


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for D, d, p in [(30, 5, 3), (30, 5, 30), (400, 20, 8), (1600, 10, 16)]:
        basis = _stack(rng, 1, D, d)[0]
        protos = _stack(rng, p, D, d)
        samples = _stack(rng, 50, D, d)
        lam = np.full(d, 1.0 / d)
        for name, impl in (("python", _kernels_py), ("cython", _kernels)):
            if impl is None:
                continue
            scan = best_of(lambda: impl.adaptive_distances(basis, protos, lam), repeat, 200)
            mat = best_of(lambda: impl.distance_matrix(samples, protos, lam), repeat, 5)
            rows.append((f"D={D} d={d} p={p}", name, scan * 1e6, mat * 1e3))
    return rows


def train_rows():
    rows = []
    for D, d in [(30, 5), (200, 10)]:
        for name, env in (("python", {"ACHORDS_PURE_PYTHON": "1"}), ("cython", {"ACHORDS_PURE_PYTHON": "0"})):
            if name == "cython" and _kernels is None:
                continue
            out = subprocess.run(
                [sys.executable, "-c", TRAIN_SNIPPET.format(D=D, d=d)],
                env={**os.environ, **env},
                capture_output=True,
                text=True,
                check=True,
            )
            rows.append((f"train D={D} d={d}", name, float(out.stdout)))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"{'case':<24}{'backend':<9}{'scan [us]':>12}{'matrix 50xp [ms]':>18}")
    for case, name, scan, mat in kernel_rows(args.repeat):
        print(f"{case:<24}{name:<9}{scan:>12.1f}{mat:>18.3f}")
    print()
    print(f"{'case':<24}{'backend':<9}{'10 epochs [s]':>12}")
    for case, name, secs in train_rows():
        print(f"{case:<24}{name:<9}{secs:>12.3f}")


if __name__ == "__main__":
    main()
