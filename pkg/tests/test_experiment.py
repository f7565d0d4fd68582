import numpy as np
import pytest

from achords.errors import ConfigError
from achords.experiment import run_eval, stratified_split, synth_sets
from achords.linalg import subspace_of_set
from achords.model import Hyperparameters


def test_synth_shapes_and_determinism():
    a = synth_sets(3, 4, 10, 2, 6, 0.1, seed=3)
    b = synth_sets(3, 4, 10, 2, 6, 0.1, seed=3)
    assert len(a) == 12 and a[0][0].shape == (10, 6)
    assert all(np.array_equal(x, y) and l == m for (x, l), (y, m) in zip(a, b))


def test_noiseless_sets_lie_in_class_subspace():
    sets = synth_sets(2, 3, 9, 2, 5, 0.0, seed=1)
    p0, _ = subspace_of_set(sets[0][0], 2)
    for x, label in sets[:3]:
        residual = x - p0.basis @ (p0.basis.T @ x)
        assert np.max(np.abs(residual)) <= 1e-12


def test_stratified_split():
    labels = ["a"] * 10 + ["b"] * 6
    tr, te = stratified_split(labels, 0.5, np.random.default_rng(0))
    assert sorted(tr + te) == list(range(16)) and not set(tr) & set(te)
    assert sum(labels[i] == "a" for i in tr) == 5 and sum(labels[i] == "b" for i in tr) == 3
    with pytest.raises(ConfigError):
        stratified_split(labels, 1.0, np.random.default_rng(0))


def _points(noise, classes=2, seed=0):
    sets = synth_sets(classes, 20, 30, 5, 50, noise, seed)
    return [subspace_of_set(x, 5)[0] for x, _ in sets], [y for _, y in sets]


def test_noise_sweep_degrades_toward_chance():
    hyper = Hyperparameters(subspace_dim=5, epochs=10)
    clean = run_eval(*_points(0.0), hyper, repeats=3)
    noisy = run_eval(*_points(50.0), hyper, repeats=3)
    assert clean.mean_accuracy == 1.0
    assert noisy.mean_accuracy <= 0.7


def test_summary_consistency():
    points, labels = _points(0.5, classes=3)
    summary = run_eval(points, labels, Hyperparameters(subspace_dim=5, epochs=3), repeats=4, seed=10)
    assert summary.mean_accuracy == pytest.approx(np.mean(summary.accuracies), abs=1e-12)
    assert summary.std_accuracy == pytest.approx(np.std(summary.accuracies), abs=1e-12)
    assert [r.seed for r in summary.repeats] == [11, 12, 13, 14]
    total = sum(sum(row.values()) for row in summary.confusion.values())
    assert total == sum(r.n_test for r in summary.repeats)
