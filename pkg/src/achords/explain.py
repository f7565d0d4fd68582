"""Closed-form attribution of distances and margins to the raw input vectors.

For a set ``X = P S R^T`` the sample-side principal vectors against a
prototype are ``U = P Q = X M`` with ``M = R S^-1 Q``.  Substituting into the
adaptive distance splits it exactly into one term per coordinate of every
input vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, RankDeficient
from .linalg import RANK_RTOL, SubspacePoint, ThinSvd, as_matrix, relevance_weights, subspace_of_set, thin_svd
from .model import ModelState, WinnerPair, find_winners, predict


@dataclass(frozen=True)
class ElementImpactMap:
    """``impacts[j, k]``: contribution of coordinate ``j`` of input vector ``k``.

    The target distance equals ``1 - impacts.sum()``.
    """

    impacts: np.ndarray
    target: Optional[int] = None

    @property
    def vector_totals(self) -> np.ndarray:
        return self.impacts.sum(axis=0)


def mixing_matrix(svd: ThinSvd, rot_p) -> np.ndarray:
    """``M = R S^-1 Q`` so that ``X @ M`` gives the sample principal vectors."""
    s = svd.singulars
    rot_p = as_matrix(rot_p, "rot_p")
    if rot_p.shape != (s.shape[0], s.shape[0]):
        raise DimensionMismatch(f"rotation shape {rot_p.shape} does not match rank {s.shape[0]}")
    if s[0] <= 0.0 or s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient("retained singular values include a numerical zero")
    return (svd.right / s) @ rot_p


def element_impacts(x, m, v, rel, target: Optional[int] = None) -> ElementImpactMap:
    x = as_matrix(x)
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    lam = relevance_weights(rel)
    if m.shape != (x.shape[1], lam.shape[0]) or v.shape != (x.shape[0], lam.shape[0]):
        raise DimensionMismatch(
            f"incompatible shapes x{x.shape}, m{m.shape}, v{v.shape}, relevance({lam.shape[0]})"
        )
    coefficient = (v * lam) @ m.T
    return ElementImpactMap(coefficient * x, target)


def align_minus(pair: WinnerPair, rel) -> tuple[np.ndarray, float]:
    """Re-express the minus prototype against the plus-side sample principal vectors.

    The minus basis is rotated by the orthogonal Procrustes solution that best
    matches it to ``U+``.  Returns the rotated basis and the distance
    ``1 - sum_i lambda_i (u_i+)^T v_i-'``, which equals the canonical minus
    distance whenever the relevances are uniform.
    """
    lam = relevance_weights(rel)
    u_plus = pair.decomp_plus.principal_a
    w_minus = pair.decomp_minus.principal_b
    svd = thin_svd(u_plus.T @ w_minus)
    aligned = w_minus @ (svd.right @ svd.left.T)
    d_aligned = 1.0 - float(np.dot(lam, np.einsum("ji,ji->i", u_plus, aligned)))
    return aligned, d_aligned


def margin_impacts(x, m, pair: WinnerPair, rel) -> np.ndarray:
    """Per-input contributions to ``d- - d+``, with ``d-`` taken under the plus-side alignment."""
    v_minus, _ = align_minus(pair, rel)
    diff = pair.decomp_plus.principal_b - v_minus
    return element_impacts(x, m, diff, rel).vector_totals


@dataclass
class ExplanationReport:
    sample_id: Optional[str]
    predicted_label: Hashable
    runner_up_label: Hashable
    vector_scores: np.ndarray
    element_scores_plus: ElementImpactMap
    element_scores_minus: ElementImpactMap
    margin_value: float
    ranking: np.ndarray
    input_names: Optional[list] = None
    top_k: int = 10
    plus_index: int = -1
    minus_index: int = -1
    d_plus: float = float("nan")
    d_minus: float = float("nan")
    d_minus_aligned: float = float("nan")
    distances: np.ndarray = field(default_factory=lambda: np.empty(0))

    def top(self) -> list[tuple[int, Optional[str], float]]:
        """``(column, name, score)`` for the ``top_k`` most supportive inputs."""
        rows = []
        for k in self.ranking[: self.top_k]:
            name = self.input_names[k] if self.input_names else None
            rows.append((int(k), name, float(self.vector_scores[k])))
        return rows

    def check(self, tol: float = 1e-8) -> dict[str, float]:
        """Residuals of the decomposition identities; every value should be <= ``tol``."""
        scores = self.vector_scores
        per_vector = self.element_scores_plus.vector_totals - self.element_scores_minus.vector_totals
        order = np.lexsort((np.arange(scores.size), -scores))
        return {
            "plus_distance": abs(1.0 - self.element_scores_plus.impacts.sum() - self.d_plus),
            "minus_distance": abs(1.0 - self.element_scores_minus.impacts.sum() - self.d_minus_aligned),
            "margin_sum": abs(scores.sum() - self.margin_value),
            "vector_consistency": float(np.max(np.abs(per_vector - scores))) if scores.size else 0.0,
            "ranking": 0.0 if np.array_equal(order, self.ranking) else 1.0,
        }

    def to_dict(self, include_elements: bool = True) -> dict:
        out = {
            "sample_id": self.sample_id,
            "predicted_label": _plain(self.predicted_label),
            "runner_up_label": _plain(self.runner_up_label),
            "plus_index": self.plus_index,
            "minus_index": self.minus_index,
            "d_plus": self.d_plus,
            "d_minus": self.d_minus,
            "d_minus_aligned": self.d_minus_aligned,
            "margin_value": self.margin_value,
            "distances": self.distances.tolist(),
            "vector_scores": self.vector_scores.tolist(),
            "ranking": self.ranking.tolist(),
            "top_k": self.top_k,
            "input_names": self.input_names,
        }
        if include_elements:
            out["element_scores_plus"] = {
                "target": self.element_scores_plus.target,
                "impacts": self.element_scores_plus.impacts.tolist(),
            }
            out["element_scores_minus"] = {
                "target": self.element_scores_minus.target,
                "impacts": self.element_scores_minus.impacts.tolist(),
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExplanationReport":
        def impact_map(key):
            entry = data.get(key)
            if entry is None:
                return ElementImpactMap(np.empty((0, 0)))
            return ElementImpactMap(np.asarray(entry["impacts"], dtype=np.float64), entry["target"])

        return cls(
            sample_id=data["sample_id"],
            predicted_label=data["predicted_label"],
            runner_up_label=data["runner_up_label"],
            vector_scores=np.asarray(data["vector_scores"], dtype=np.float64),
            element_scores_plus=impact_map("element_scores_plus"),
            element_scores_minus=impact_map("element_scores_minus"),
            margin_value=data["margin_value"],
            ranking=np.asarray(data["ranking"], dtype=np.int64),
            input_names=data.get("input_names"),
            top_k=data["top_k"],
            plus_index=data["plus_index"],
            minus_index=data["minus_index"],
            d_plus=data["d_plus"],
            d_minus=data["d_minus"],
            d_minus_aligned=data["d_minus_aligned"],
            distances=np.asarray(data["distances"], dtype=np.float64),
        )


def _plain(label):
    return label.item() if isinstance(label, np.generic) else label


def rank_scores(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score, lower index first on ties."""
    scores = np.asarray(scores)
    return np.lexsort((np.arange(scores.size), -scores))


def build_report(
    x,
    model: ModelState,
    names: Optional[Sequence[str]] = None,
    top_k: int = 10,
    sample_id: Optional[str] = None,
) -> ExplanationReport:
    x = as_matrix(x)
    if names is not None and len(names) != x.shape[1]:
        raise DimensionMismatch(f"{len(names)} names for {x.shape[1]} input vectors")
    point, svd = subspace_of_set(x, model.subspace_dim)
    label, distances = predict(point, model)
    pair = find_winners(point, model, label=label)
    rel = model.relevance
    m = mixing_matrix(svd, pair.decomp_plus.rot_a)
    v_minus, d_minus_aligned = align_minus(pair, rel)
    plus_map = element_impacts(x, m, pair.decomp_plus.principal_b, rel, target=pair.plus_index)
    minus_map = element_impacts(x, m, v_minus, rel, target=pair.minus_index)
    scores = margin_impacts(x, m, pair, rel)
    return ExplanationReport(
        sample_id=sample_id,
        predicted_label=label,
        runner_up_label=model.prototypes[pair.minus_index].label,
        vector_scores=scores,
        element_scores_plus=plus_map,
        element_scores_minus=minus_map,
        margin_value=d_minus_aligned - pair.d_plus,
        ranking=rank_scores(scores),
        input_names=list(names) if names is not None else None,
        top_k=max(0, int(top_k)),
        plus_index=pair.plus_index,
        minus_index=pair.minus_index,
        d_plus=pair.d_plus,
        d_minus=pair.d_minus,
        d_minus_aligned=d_minus_aligned,
        distances=np.asarray(distances),
    )
