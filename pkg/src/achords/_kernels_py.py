"""Pure-numpy implementation of the distance kernels.

Mirrors the compiled ``_kernels`` extension function for function; used
whenever the extension is unavailable or disabled.
"""

import numpy as np


def adaptive_distances(basis, prototypes, lambdas):
    """Adaptive distances from one ``D x d`` basis to a ``p x D x d`` prototype stack."""
    basis = np.ascontiguousarray(basis, dtype=np.float64)
    prototypes = np.ascontiguousarray(prototypes, dtype=np.float64)
    lambdas = np.ascontiguousarray(lambdas, dtype=np.float64)
    cross = np.matmul(basis.T, prototypes)
    cos = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)
    return np.clip(1.0 - cos @ lambdas, 0.0, 1.0)


def distance_matrix(samples, prototypes, lambdas):
    """``N x p`` adaptive distances between a sample stack and a prototype stack."""
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    prototypes = np.ascontiguousarray(prototypes, dtype=np.float64)
    lambdas = np.ascontiguousarray(lambdas, dtype=np.float64)
    cross = np.matmul(np.swapaxes(samples, 1, 2)[:, None], prototypes[None])
    cos = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)
    return np.clip(1.0 - cos @ lambdas, 0.0, 1.0)
