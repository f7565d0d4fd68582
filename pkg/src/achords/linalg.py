"""Dense linear algebra on the Grassmann manifold.

Subspaces are stored as ``D x d`` float64 arrays with orthonormal columns.
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Optional

import numpy as np

from .errors import DimensionMismatch, EmptySet, InvalidInput, RankDeficient, RankTooLarge

ORTHO_TOL = 1e-10
RECON_TOL = 1e-8
RANK_RTOL = 1e-12


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Validate ``x`` as a finite 2-d float64 array (copying only if needed)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ThinSvd:
    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.singulars.shape[0]

    def truncate(self, d: int) -> "ThinSvd":
        return ThinSvd(self.left[:, :d], self.singulars[:d], self.right[:, :d])

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singulars) @ self.right.T


@dataclass(frozen=True, eq=False)
class SubspacePoint:
    """An orthonormal basis of a point on G(D, d), optionally labelled."""

    basis: np.ndarray
    label: Optional[Hashable] = None

    def __post_init__(self):
        basis = as_matrix(self.basis, "basis")
        d = basis.shape[1]
        if not 1 <= d <= basis.shape[0]:
            raise DimensionMismatch(f"basis of shape {basis.shape} is not D x d with 1 <= d <= D")
        err = np.max(np.abs(basis.T @ basis - np.eye(d)))
        if err > ORTHO_TOL:
            raise InvalidInput(f"basis columns are not orthonormal (error {err:.3e})")
        object.__setattr__(self, "basis", basis)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def subspace_dim(self) -> int:
        return self.basis.shape[1]

    def with_label(self, label) -> "SubspacePoint":
        return SubspacePoint(self.basis, label)

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


@dataclass(frozen=True)
class CanonicalDecomposition:
    """Rotations, cosines and principal vectors of a subspace pair.

    ``principal_a.T @ principal_b`` is diagonal with ``cosines`` on the
    diagonal (the unclamped values are kept in ``raw_cosines``).
    """

    rot_a: np.ndarray
    rot_b: np.ndarray
    cosines: np.ndarray
    principal_a: np.ndarray
    principal_b: np.ndarray
    raw_cosines: np.ndarray


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> None:
    # Largest-magnitude entry of every left vector made positive; argmax picks the lowest index on ties.
    if u.shape[0] == 0:
        return
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u *= signs
    vt *= signs[:, None]


def thin_svd(x) -> ThinSvd:
    """Thin SVD ``x = left @ diag(singulars) @ right.T`` with r = min(rows, cols).

    Singular vectors follow a fixed sign convention: each left vector has its
    largest-magnitude entry positive, so repeated calls on identical input
    return identical factors.
    """
    x = as_matrix(x)
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise EmptySet("cannot decompose an empty matrix")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    _fix_signs(u, vt)
    return ThinSvd(u, s, vt.T.copy())


def subspace_of_set(x, d: int, label=None) -> tuple[SubspacePoint, ThinSvd]:
    """Represent the columns of ``x`` by their dominant ``d``-dimensional subspace.

    Returns the point together with the rank-``d`` truncated SVD, which the
    explanation code needs to map principal vectors back onto the inputs.
    """
    x = as_matrix(x)
    if x.shape[1] == 0:
        raise EmptySet("set has no vectors")
    if d < 1 or d > min(x.shape):
        raise RankTooLarge(f"subspace dimension {d} exceeds min{x.shape}")
    svd = thin_svd(x)
    s = svd.singulars
    if s[0] <= 0.0 or s[d - 1] <= RANK_RTOL * s[0]:
        raise RankDeficient(f"set has numerical rank below {d}")
    svd = svd.truncate(d)
    return SubspacePoint(svd.left.copy(), label), svd


def _check_pair(a: SubspacePoint, b: SubspacePoint) -> None:
    if a.basis.shape != b.basis.shape:
        raise DimensionMismatch(f"subspace shapes differ: {a.basis.shape} vs {b.basis.shape}")


def canonical_decomposition(a: SubspacePoint, b: SubspacePoint) -> CanonicalDecomposition:
    _check_pair(a, b)
    svd = thin_svd(a.basis.T @ b.basis)
    raw = svd.singulars
    return CanonicalDecomposition(
        rot_a=svd.left,
        rot_b=svd.right,
        cosines=np.clip(raw, 0.0, 1.0),
        principal_a=a.basis @ svd.left,
        principal_b=b.basis @ svd.right,
        raw_cosines=raw,
    )


def chordal_distance(a: SubspacePoint, b: SubspacePoint) -> float:
    """``(d - sum cos^2)^(1/2)``, evaluated as ``||B - A A^T B||_F`` to avoid cancellation near zero."""
    _check_pair(a, b)
    residual = b.basis - a.basis @ (a.basis.T @ b.basis)
    return float(min(np.linalg.norm(residual), np.sqrt(a.subspace_dim)))


def relevance_weights(rel) -> np.ndarray:
    """Accept a RelevanceVector or a plain sequence of weights."""
    return np.asarray(getattr(rel, "lambdas", rel), dtype=np.float64)


def adaptive_distance(p: SubspacePoint, w: SubspacePoint, rel) -> tuple[float, CanonicalDecomposition]:
    """Relevance-weighted distance ``1 - sum_k lambda_k cos(theta_k)``.

    The decomposition is returned as well so gradient and explanation code
    can reuse the principal vectors without a second SVD.
    """
    lam = relevance_weights(rel)
    decomp = canonical_decomposition(p, w)
    if lam.shape != decomp.cosines.shape:
        raise DimensionMismatch(f"relevance has length {lam.shape[0]}, expected {decomp.cosines.shape[0]}")
    value = 1.0 - float(np.dot(lam, decomp.cosines))
    return min(max(value, 0.0), 1.0), decomp


def orthonormalize(w) -> np.ndarray:
    """Closest matrix with orthonormal columns (polar factor) spanning the same space."""
    w = as_matrix(w, "w")
    if w.shape[1] > w.shape[0]:
        raise RankDeficient(f"{w.shape[1]} columns cannot be independent in R^{w.shape[0]}")
    svd = thin_svd(w)
    s = svd.singulars
    if s[0] <= 0.0 or s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient("matrix to orthonormalize is rank deficient")
    return svd.left @ svd.right.T


def projector_distance(a, b) -> float:
    """Frobenius distance between the orthogonal projectors onto two column spaces."""
    qa = np.asarray(a)
    qb = np.asarray(b)
    return float(np.linalg.norm(qa @ qa.T - qb @ qb.T))
