"""Subspace LVQ with an adaptive chordal distance and closed-form explanations."""

from .errors import *  # noqa: F401,F403
from .explain import ElementImpactMap, ExplanationReport, build_report, element_impacts, margin_impacts, mixing_matrix
from .kernels import BACKEND
from .linalg import (
    CanonicalDecomposition,
    SubspacePoint,
    ThinSvd,
    adaptive_distance,
    canonical_decomposition,
    chordal_distance,
    orthonormalize,
    subspace_of_set,
    thin_svd,
)
from .model import (
    Hyperparameters,
    ModelState,
    RelevanceVector,
    WinnerPair,
    find_winners,
    init_model,
    margin,
    predict,
    prototype_gradients,
    relevance_gradient,
    sample_cost,
    sgd_step,
    train,
)

__version__ = "0.1.0"
