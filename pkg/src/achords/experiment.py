"""Synthetic data generation and the repeated-split evaluation protocol."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .linalg import SubspacePoint, orthonormalize
from .model import Hyperparameters, ModelState, predict_many, train


def synth_sets(
    classes: int,
    sets_per_class: int,
    ambient_dim: int,
    dim: int,
    set_size: int,
    noise: float,
    seed: int = 0,
) -> list[tuple[np.ndarray, str]]:
    """Sets drawn around one random base subspace per class.

    Each set is ``B_c A + noise * E`` with Gaussian ``A`` (dim x set_size)
    and ``E`` (ambient_dim x set_size).
    """
    if classes < 2:
        raise ConfigError("need at least 2 classes")
    if sets_per_class < 1:
        raise ConfigError("sets_per_class must be >= 1")
    if not 1 <= dim <= ambient_dim:
        raise ConfigError("need 1 <= dim <= ambient_dim")
    if set_size < dim:
        raise ConfigError("set_size must be >= dim")
    if not (noise >= 0.0 and math.isfinite(noise)):
        raise ConfigError("noise must be a finite nonnegative number")
    rng = np.random.default_rng(seed)
    bases = [orthonormalize(rng.standard_normal((ambient_dim, dim))) for _ in range(classes)]
    sets = []
    for c, base in enumerate(bases):
        for _ in range(sets_per_class):
            coeffs = rng.standard_normal((dim, set_size))
            eps = rng.standard_normal((ambient_dim, set_size))
            sets.append((base @ coeffs + noise * eps, f"class{c}"))
    return sets


def stratified_split(labels: Sequence, train_fraction: float, rng: np.random.Generator, min_train: int = 1):
    """Per-class random split; every class keeps at least ``min_train`` training members."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    members: dict = {}
    for i, y in enumerate(labels):
        members.setdefault(y, []).append(i)
    train_idx, test_idx = [], []
    for y, idx in members.items():
        perm = rng.permutation(len(idx))
        n_train = min(len(idx), max(min_train, int(round(train_fraction * len(idx)))))
        train_idx.extend(idx[k] for k in perm[:n_train])
        test_idx.extend(idx[k] for k in perm[n_train:])
    return sorted(train_idx), sorted(test_idx)


@dataclass
class RepeatResult:
    seed: int
    accuracy: float
    first_cost: float
    final_cost: float
    n_train: int
    n_test: int


@dataclass
class EvalSummary:
    repeats: list
    per_class_accuracy: dict
    confusion: dict
    accuracies: list = field(init=False)
    mean_accuracy: float = field(init=False)
    std_accuracy: float = field(init=False)

    def __post_init__(self):
        self.accuracies = [r.accuracy for r in self.repeats]
        self.mean_accuracy = float(np.mean(self.accuracies))
        self.std_accuracy = float(np.std(self.accuracies))

    def to_dict(self) -> dict:
        return {
            "accuracies": self.accuracies,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion": self.confusion,
            "repeats": [dataclasses.asdict(r) for r in self.repeats],
        }


def _evaluate_split(points, labels, train_idx, test_idx, hyper) -> tuple[ModelState, list]:
    model = train([(points[i], labels[i]) for i in train_idx], hyper)
    predicted = predict_many([points[i] for i in test_idx], model)
    return model, predicted


def run_eval(
    points: Sequence[SubspacePoint],
    labels: Sequence,
    hyper: Hyperparameters,
    repeats: int = 10,
    train_fraction: float = 0.5,
    seed: int = 0,
    fixed_split: Optional[Sequence[str]] = None,
) -> EvalSummary:
    """Train and test on ``repeats`` stratified random splits seeded ``seed+1 .. seed+repeats``.

    With ``fixed_split`` (one ``"train"``/``"test"`` tag per item) a single
    run on that split is made instead.
    """
    if fixed_split is not None:
        train_idx = [i for i, s in enumerate(fixed_split) if s == "train"]
        test_idx = [i for i, s in enumerate(fixed_split) if s == "test"]
        plans = [(hyper.seed, train_idx, test_idx)]
    else:
        if repeats < 1:
            raise ConfigError("repeats must be >= 1")
        plans = []
        for r in range(1, repeats + 1):
            rng = np.random.default_rng(seed + r)
            tr, te = stratified_split(labels, train_fraction, rng, hyper.prototypes_per_class)
            plans.append((seed + r, tr, te))
    class_names = list(dict.fromkeys(labels))
    confusion = {str(a): {str(b): 0 for b in class_names} for a in class_names}
    results = []
    for split_seed, tr, te in plans:
        if not te:
            raise ConfigError("split leaves no test items")
        run_hyper = dataclasses.replace(hyper, seed=split_seed)
        model, predicted = _evaluate_split(points, labels, tr, te, run_hyper)
        correct = 0
        for i, pred in zip(te, predicted):
            confusion[str(labels[i])][str(pred)] += 1
            correct += pred == labels[i]
        costs = [row[1] for row in model.training_log]
        results.append(
            RepeatResult(
                seed=split_seed,
                accuracy=correct / len(te),
                first_cost=costs[0] if costs else math.nan,
                final_cost=costs[-1] if costs else math.nan,
                n_train=len(tr),
                n_test=len(te),
            )
        )
    per_class = {}
    for a, row in confusion.items():
        total = sum(row.values())
        per_class[a] = row[a] / total if total else math.nan
    return EvalSummary(results, per_class, confusion)
