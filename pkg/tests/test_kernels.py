import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from achords import _kernels_py, kernels
from conftest import random_point
from oracles import exhaustive_scan, oracle_adaptive_distance

try:
    from achords import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
BACKENDS.append(
    pytest.param(_compiled, id="cython", marks=pytest.mark.skipif(_compiled is None, reason="extension not built"))
)


def _stack(rng, p, D, d):
    return np.stack([random_point(rng, D, d).basis for _ in range(p)])


@pytest.mark.parametrize("impl", BACKENDS)
@pytest.mark.parametrize("D,d", [(3, 1), (6, 2), (10, 3), (20, 5), (30, 8), (40, 12)])
def test_adaptive_distances_match_oracle(impl, rng, D, d):
    basis = random_point(rng, D, d).basis
    protos = _stack(rng, 7, D, d)
    lam = rng.dirichlet(np.ones(d))
    got = impl.adaptive_distances(basis, protos, lam)
    want = [oracle_adaptive_distance(basis, w, lam) for w in protos]
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS)
def test_distance_matrix_rows(impl, rng):
    samples = _stack(rng, 11, 12, 4)
    protos = _stack(rng, 5, 12, 4)
    lam = rng.dirichlet(np.ones(4))
    mat = impl.distance_matrix(samples, protos, lam)
    assert mat.shape == (11, 5)
    for i in range(11):
        np.testing.assert_allclose(mat[i], impl.adaptive_distances(samples[i], protos, lam), atol=1e-14)


@pytest.mark.parametrize("impl", BACKENDS)
def test_identical_and_orthogonal(impl):
    eye = np.eye(6)
    protos = np.stack([eye[:, :3], eye[:, 3:]])
    got = impl.adaptive_distances(eye[:, :3], protos, np.full(3, 1 / 3))
    np.testing.assert_allclose(got, [0.0, 1.0], atol=1e-14)


@pytest.mark.skipif(_compiled is None, reason="extension not built")
def test_backends_agree(rng):
    for _ in range(20):
        D = int(rng.integers(2, 25))
        d = int(rng.integers(1, D + 1))
        basis = random_point(rng, D, d).basis
        protos = _stack(rng, 6, D, d)
        lam = rng.dirichlet(np.ones(d))
        np.testing.assert_allclose(
            _compiled.adaptive_distances(basis, protos, lam),
            _kernels_py.adaptive_distances(basis, protos, lam),
            atol=1e-13,
        )
        best, _ = exhaustive_scan(basis, protos, lam)
        assert int(np.argmin(_compiled.adaptive_distances(basis, protos, lam))) == best


@pytest.mark.skipif(_compiled is None, reason="extension not built")
def test_compiled_rejects_bad_shapes():
    with pytest.raises(ValueError):
        _compiled.adaptive_distances(np.eye(4)[:, :2], np.zeros((3, 4, 3)), np.ones(2) / 2)


def test_fallback_selected_by_environment():
    code = "import achords.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, ACHORDS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("python", "cython")
