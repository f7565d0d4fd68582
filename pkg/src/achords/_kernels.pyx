# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance kernels.

The ``d x d`` cross products are formed with one batched BLAS call; their
singular values then come from a one-sided (Hestenes) Jacobi sweep in C,
which is accurate for tiny singular values and avoids a LAPACK call per
prototype.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

# above this size LAPACK's batched SVD beats the Jacobi sweep (see benchmarks/)
JACOBI_MAX_DIM = 8

cdef int MAX_SWEEPS = 80
cdef double JACOBI_EPS = 2.220446049250313e-16


cdef void _singular_values(double* a, int n, double* out) noexcept nogil:
    # a is n x n column-major and is overwritten; out receives descending values
    cdef int sweep, p, q, i, j
    cdef double alpha, beta, gamma, zeta, t, c, s, ap, aq, tmp
    cdef bint rotated
    for sweep in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(n):
                    ap = a[p * n + i]
                    aq = a[q * n + i]
                    alpha += ap * ap
                    beta += aq * aq
                    gamma += ap * aq
                if gamma == 0.0 or fabs(gamma) <= JACOBI_EPS * sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(n):
                    ap = a[p * n + i]
                    aq = a[q * n + i]
                    a[p * n + i] = c * ap - s * aq
                    a[q * n + i] = s * ap + c * aq
        if not rotated:
            break
    for j in range(n):
        tmp = 0.0
        for i in range(n):
            tmp += a[j * n + i] * a[j * n + i]
        out[j] = sqrt(tmp)
    # insertion sort, descending
    for j in range(1, n):
        tmp = out[j]
        i = j - 1
        while i >= 0 and out[i] < tmp:
            out[i + 1] = out[i]
            i -= 1
        out[i + 1] = tmp


cdef void _distances(const double[:, :, ::1] cross, const double[::1] lambdas,
                     double[::1] out, double* work, double* sv) noexcept nogil:
    # rows of each cross product are used as Jacobi columns; singular values are unchanged by transposition
    cdef Py_ssize_t m = cross.shape[0], k
    cdef int d = <int>cross.shape[1]
    cdef int a, b
    cdef double acc, cosv
    for k in range(m):
        for a in range(d):
            for b in range(d):
                work[a * d + b] = cross[k, a, b]
        _singular_values(work, d, sv)
        acc = 0.0
        for a in range(d):
            cosv = sv[a]
            if cosv > 1.0:
                cosv = 1.0
            elif cosv < 0.0:
                cosv = 0.0
            acc += lambdas[a] * cosv
        acc = 1.0 - acc
        if acc < 0.0:
            acc = 0.0
        elif acc > 1.0:
            acc = 1.0
        out[k] = acc


def weighted_distances(cross, lambdas):
    """``1 - lambda . sv(C_k)`` (cosines clamped to [0, 1]) for a stack of ``d x d`` matrices."""
    cross = np.ascontiguousarray(cross, dtype=np.float64)
    lambdas = np.ascontiguousarray(lambdas, dtype=np.float64)
    if cross.ndim != 3 or cross.shape[1] != cross.shape[2] or lambdas.shape[0] != cross.shape[1]:
        raise ValueError("cross products must be d x d with d relevances")
    if cross.shape[1] > JACOBI_MAX_DIM:
        cos = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)
        return np.clip(1.0 - cos @ lambdas, 0.0, 1.0)
    cdef const double[:, :, ::1] c = cross
    cdef const double[::1] lam = lambdas
    cdef int d = <int>c.shape[1]
    out = np.empty(c.shape[0], dtype=np.float64)
    cdef double[::1] res = out
    cdef double* work = <double*>malloc(max(d * d, 1) * sizeof(double))
    cdef double* sv = <double*>malloc(max(d, 1) * sizeof(double))
    if work == NULL or sv == NULL:
        free(work)
        free(sv)
        raise MemoryError()
    try:
        with nogil:
            _distances(c, lam, res, work, sv)
    finally:
        free(work)
        free(sv)
    return out


def adaptive_distances(basis, prototypes, lambdas):
    """Adaptive distances from one ``D x d`` basis to a ``p x D x d`` prototype stack."""
    basis = np.asarray(basis, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    if prototypes.ndim != 3 or prototypes.shape[1:] != basis.shape:
        raise ValueError("shape mismatch between basis and prototypes")
    return weighted_distances(np.matmul(basis.T, prototypes), lambdas)


def distance_matrix(samples, prototypes, lambdas):
    """``N x p`` adaptive distances between a sample stack and a prototype stack."""
    samples = np.asarray(samples, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    if samples.ndim != 3 or prototypes.ndim != 3 or samples.shape[1:] != prototypes.shape[1:]:
        raise ValueError("shape mismatch between samples and prototypes")
    n, p, d = samples.shape[0], prototypes.shape[0], samples.shape[2]
    cross = np.matmul(np.swapaxes(samples, 1, 2)[:, None], prototypes[None])
    return weighted_distances(cross.reshape(n * p, d, d), lambdas).reshape(n, p)
