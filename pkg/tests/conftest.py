import numpy as np
import pytest

from achords.linalg import SubspacePoint
from achords.model import Hyperparameters, ModelState, RelevanceVector
from oracles import random_basis


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_point(rng, D, d, label=None):
    return SubspacePoint(random_basis(rng, D, d), label)


def random_model(rng, D, d, labels, relevance=None, **hyper):
    protos = tuple(random_point(rng, D, d, y) for y in labels)
    lam = rng.dirichlet(np.ones(d)) if relevance is None else relevance
    return ModelState(protos, RelevanceVector(lam), Hyperparameters(subspace_dim=d, **hyper))


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def record(criterion, ok, detail=""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        _ACCEPTANCE_LINES.append(f"{criterion}: {status} {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
