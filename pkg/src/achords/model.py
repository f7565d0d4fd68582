"""Adaptive chordal distance LVQ on the Grassmann manifold.

Prototypes are labelled subspaces; a single global relevance vector weights
the canonical correlations.  Training is plain per-sample SGD on the
relative-margin cost with analytic gradients, followed by restoring the
constraints (orthonormal prototypes, relevances on the simplex).
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    DegenerateMargin,
    DimensionMismatch,
    InsufficientClassData,
    InvalidInput,
    WinnerUnavailable,
)
from .linalg import (
    CanonicalDecomposition,
    SubspacePoint,
    adaptive_distance,
    as_matrix,
    orthonormalize,
    subspace_of_set,
)

log = logging.getLogger(__name__)

PHI_CHOICES = ("identity", "sigmoid")
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RelevanceVector:
    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=np.float64).reshape(-1)
        if lam.size == 0 or not np.all(np.isfinite(lam)):
            raise InvalidInput("relevance vector must be non-empty and finite")
        if np.any(lam < 0.0) or abs(lam.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidInput("relevances must be nonnegative and sum to one")
        lam.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)

    def __len__(self):
        return self.lambdas.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.lambdas, dtype=dtype)

    @classmethod
    def uniform(cls, d: int) -> "RelevanceVector":
        return cls(np.full(d, 1.0 / d))

    @classmethod
    def project(cls, raw) -> "RelevanceVector":
        """Clamp negative entries to zero and rescale to unit sum.

        An all-zero result falls back to uniform weights.
        """
        lam = np.maximum(np.asarray(raw, dtype=np.float64), 0.0)
        total = lam.sum()
        if not total > 0.0:
            log.warning("relevance vector collapsed to zero; resetting to uniform")
            return cls.uniform(lam.shape[0])
        return cls(lam / total)


@dataclass(frozen=True)
class Hyperparameters:
    subspace_dim: int
    lr_prototype: float = 0.1
    lr_relevance: float = 1e-5
    epochs: int = 30
    phi: str = "identity"
    prototypes_per_class: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.subspace_dim < 1:
            raise InvalidInput("subspace_dim must be >= 1")
        if self.lr_prototype < 0 or self.lr_relevance < 0:
            raise InvalidInput("learning rates must be nonnegative")
        if self.epochs < 0 or self.prototypes_per_class < 1 or self.seed < 0:
            raise InvalidInput("epochs, prototypes_per_class and seed must be nonnegative counts")
        if self.phi not in PHI_CHOICES:
            raise InvalidInput(f"phi must be one of {PHI_CHOICES}, got {self.phi!r}")
        if self.lr_relevance > self.lr_prototype:
            warnings.warn("lr_relevance exceeds lr_prototype", stacklevel=2)


@dataclass(frozen=True, eq=False)
class ModelState:
    prototypes: tuple
    relevance: RelevanceVector
    hyper: Hyperparameters
    training_log: tuple = ()

    @property
    def ambient_dim(self) -> int:
        return self.prototypes[0].ambient_dim

    @property
    def subspace_dim(self) -> int:
        return self.prototypes[0].subspace_dim

    @property
    def labels(self) -> list:
        return [w.label for w in self.prototypes]

    def prototype_stack(self) -> np.ndarray:
        return np.stack([w.basis for w in self.prototypes])


@dataclass(frozen=True)
class WinnerPair:
    plus_index: int
    minus_index: int
    d_plus: float
    d_minus: float
    decomp_plus: CanonicalDecomposition
    decomp_minus: CanonicalDecomposition


def _check_training_set(train, d: int) -> tuple[list[SubspacePoint], list]:
    points, labels = [], []
    for point, label in train:
        points.append(point)
        labels.append(label)
    if not points:
        raise InsufficientClassData("empty training set")
    shape = points[0].basis.shape
    if shape[1] != d:
        raise DimensionMismatch(f"training subspaces have dimension {shape[1]}, expected {d}")
    for p in points:
        if p.basis.shape != shape:
            raise DimensionMismatch(f"inconsistent subspace shapes {p.basis.shape} vs {shape}")
    return points, labels


def _class_members(labels: Sequence) -> dict:
    members: dict = {}
    for i, y in enumerate(labels):
        members.setdefault(y, []).append(i)
    return members


def init_model(train, hyper: Hyperparameters) -> ModelState:
    """Start every prototype at a distinct, randomly chosen member of its class."""
    points, labels = _check_training_set(train, hyper.subspace_dim)
    members = _class_members(labels)
    if len(members) < 2:
        raise InsufficientClassData("need at least two classes")
    rng = np.random.default_rng(np.random.SeedSequence(hyper.seed).spawn(2)[0])
    prototypes = []
    for y, idx in members.items():
        if len(idx) < hyper.prototypes_per_class:
            raise InsufficientClassData(
                f"class {y!r} has {len(idx)} members, needs {hyper.prototypes_per_class}"
            )
        chosen = rng.choice(len(idx), size=hyper.prototypes_per_class, replace=False)
        for c in chosen:
            prototypes.append(SubspacePoint(points[idx[c]].basis.copy(), y))
    return ModelState(tuple(prototypes), RelevanceVector.uniform(hyper.subspace_dim), hyper)


def _argmin_where(dist: np.ndarray, mask: np.ndarray) -> int:
    cand = np.flatnonzero(mask)
    if cand.size == 0:
        return -1
    return int(cand[np.argmin(dist[cand])])


def find_winners(sample: SubspacePoint, model: ModelState, label=None) -> WinnerPair:
    """Nearest prototype with the sample's label and nearest with any other label."""
    label = sample.label if label is None else label
    if sample.basis.shape != model.prototypes[0].basis.shape:
        raise DimensionMismatch(
            f"sample shape {sample.basis.shape} does not match prototypes {model.prototypes[0].basis.shape}"
        )
    dist = kernels.adaptive_distances(sample.basis, model.prototype_stack(), model.relevance.lambdas)
    same = np.array([y == label for y in model.labels])
    plus = _argmin_where(dist, same)
    minus = _argmin_where(dist, ~same)
    if plus < 0 or minus < 0:
        raise WinnerUnavailable(f"no {'same' if plus < 0 else 'other'}-label prototype for {label!r}")
    d_plus, dec_plus = adaptive_distance(sample, model.prototypes[plus], model.relevance)
    d_minus, dec_minus = adaptive_distance(sample, model.prototypes[minus], model.relevance)
    return WinnerPair(plus, minus, d_plus, d_minus, dec_plus, dec_minus)


def margin(d_plus: float, d_minus: float) -> float:
    total = d_plus + d_minus
    if total == 0.0:
        raise DegenerateMargin("both winner distances are zero")
    return (d_plus - d_minus) / total


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def sample_cost(mu: float, phi: str) -> float:
    if phi == "identity":
        return mu
    if phi == "sigmoid":
        return _sigmoid(mu)
    raise InvalidInput(f"unknown phi {phi!r}")


def cost_slope(mu: float, phi: str) -> float:
    """Derivative of the transfer function at ``mu``."""
    if phi == "identity":
        return 1.0
    if phi == "sigmoid":
        s = _sigmoid(mu)
        return s * (1.0 - s)
    raise InvalidInput(f"unknown phi {phi!r}")


def _margin_slopes(d_plus: float, d_minus: float) -> tuple[float, float]:
    total = d_plus + d_minus
    if total == 0.0:
        raise DegenerateMargin("both winner distances are zero")
    return 2.0 * d_minus / total**2, -2.0 * d_plus / total**2


def prototype_gradients(pair: WinnerPair, rel, phi: str, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the sample cost w.r.t. the principal-vector matrices V+ and V-.

    With U fixed, d = 1 - sum_k lambda_k u_k^T v_k gives dd/dV = -U diag(lambda).
    """
    lam = np.asarray(getattr(rel, "lambdas", rel), dtype=np.float64)
    dmu_plus, dmu_minus = _margin_slopes(pair.d_plus, pair.d_minus)
    slope = cost_slope(mu, phi)
    grad_plus = -slope * dmu_plus * (pair.decomp_plus.principal_a * lam)
    grad_minus = -slope * dmu_minus * (pair.decomp_minus.principal_a * lam)
    return grad_plus, grad_minus


def relevance_gradient(pair: WinnerPair, phi: str, mu: float) -> np.ndarray:
    """Gradient of the sample cost w.r.t. the unnormalized relevances (dd/dlambda_k = -cos_k)."""
    dmu_plus, dmu_minus = _margin_slopes(pair.d_plus, pair.d_minus)
    slope = cost_slope(mu, phi)
    return -slope * (dmu_plus * pair.decomp_plus.cosines + dmu_minus * pair.decomp_minus.cosines)


def sgd_step(model: ModelState, sample: SubspacePoint) -> tuple[ModelState, float]:
    """One stochastic update on ``sample``; returns the new model and the sample cost.

    A degenerate margin (both winners at distance zero) skips the update and
    reports a NaN cost.
    """
    hyper = model.hyper
    pair = find_winners(sample, model)
    try:
        mu = margin(pair.d_plus, pair.d_minus)
    except DegenerateMargin:
        log.warning("degenerate margin; update skipped")
        return model, math.nan
    cost = sample_cost(mu, hyper.phi)
    grad_plus, grad_minus = prototype_gradients(pair, model.relevance, hyper.phi, mu)
    grad_rel = relevance_gradient(pair, hyper.phi, mu)

    prototypes = list(model.prototypes)
    for idx, decomp, grad in (
        (pair.plus_index, pair.decomp_plus, grad_plus),
        (pair.minus_index, pair.decomp_minus, grad_minus),
    ):
        updated = orthonormalize(decomp.principal_b - hyper.lr_prototype * grad)
        prototypes[idx] = SubspacePoint(updated, prototypes[idx].label)
    relevance = RelevanceVector.project(model.relevance.lambdas - hyper.lr_relevance * grad_rel)
    return dataclasses.replace(model, prototypes=tuple(prototypes), relevance=relevance), cost


def training_accuracy(model: ModelState, points: Sequence[SubspacePoint], labels: Sequence) -> float:
    if not points:
        return math.nan
    pred = predict_many(points, model)
    return float(np.mean([p == y for p, y in zip(pred, labels)]))


def train(
    train_set,
    hyper: Hyperparameters,
    on_step: Optional[Callable[[ModelState, int, int], None]] = None,
) -> ModelState:
    """Run ``hyper.epochs`` passes of seeded-shuffle SGD.

    ``on_step(model, epoch, step)`` is called after every update, mainly for
    constraint monitoring.
    """
    points, labels = _check_training_set(train_set, hyper.subspace_dim)
    model = init_model(list(zip(points, labels)), hyper)
    samples = [p if p.label == y else p.with_label(y) for p, y in zip(points, labels)]
    order_rng = np.random.default_rng(np.random.SeedSequence(hyper.seed).spawn(2)[1])
    history = []
    for epoch in range(1, hyper.epochs + 1):
        costs = []
        for step, i in enumerate(order_rng.permutation(len(samples))):
            model, cost = sgd_step(model, samples[i])
            costs.append(cost)
            if on_step is not None:
                on_step(model, epoch, step)
        finite = [c for c in costs if not math.isnan(c)]
        mean_cost = float(np.mean(finite)) if finite else math.nan
        acc = training_accuracy(model, points, labels)
        history.append((epoch, mean_cost, acc))
        log.info("epoch=%d cost=%.6f train_accuracy=%.4f", epoch, mean_cost, acc)
    return dataclasses.replace(model, training_log=tuple(history))


def _as_point(x, model: ModelState) -> SubspacePoint:
    if isinstance(x, SubspacePoint):
        return x
    point, _ = subspace_of_set(as_matrix(x), model.subspace_dim)
    return point


def predict(x, model: ModelState) -> tuple[Hashable, np.ndarray]:
    """Label of the nearest prototype (lowest index on ties) and all distances."""
    point = _as_point(x, model)
    if point.basis.shape != model.prototypes[0].basis.shape:
        raise DimensionMismatch(
            f"input subspace shape {point.basis.shape} does not match prototypes {model.prototypes[0].basis.shape}"
        )
    dist = kernels.adaptive_distances(point.basis, model.prototype_stack(), model.relevance.lambdas)
    return model.prototypes[int(np.argmin(dist))].label, dist


def predict_many(xs, model: ModelState) -> list:
    points = [_as_point(x, model) for x in xs]
    if not points:
        return []
    stack = np.stack([p.basis for p in points])
    if stack.shape[1:] != model.prototypes[0].basis.shape:
        raise DimensionMismatch("input subspaces do not match the prototypes")
    dist = kernels.distance_matrix(stack, model.prototype_stack(), model.relevance.lambdas)
    labels = model.labels
    return [labels[k] for k in np.argmin(dist, axis=1)]
