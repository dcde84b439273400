"""Partial graph matching with partial Gromov-Wasserstein transport and node embeddings."""

from pgwmatch.errors import NumericalError, PGWError, ValidationError
from pgwmatch.graph import (
    Graph,
    KernelConfig,
    build_measure,
    embedding_kernel,
    feature_cosine_weights,
    structural_dissimilarity,
)
from pgwmatch.solver import (
    SQUARE_LOSS,
    LossFactorization,
    PartialCouplingSpec,
    SolverConfig,
    gw_loss_matrix,
    objective_eval,
    periodic_projection,
    proximal_solve,
)
from pgwmatch.matcher import (
    Correspondence,
    MatchConfig,
    extend_plan,
    extract_correspondences,
    ppgm_run,
)
from pgwmatch.metrics import MetricReport, score

__version__ = "0.1.0"

__all__ = [
    "Correspondence",
    "Graph",
    "KernelConfig",
    "LossFactorization",
    "MatchConfig",
    "MetricReport",
    "NumericalError",
    "PGWError",
    "PartialCouplingSpec",
    "SQUARE_LOSS",
    "SolverConfig",
    "ValidationError",
    "build_measure",
    "embedding_kernel",
    "extend_plan",
    "extract_correspondences",
    "feature_cosine_weights",
    "gw_loss_matrix",
    "objective_eval",
    "periodic_projection",
    "ppgm_run",
    "proximal_solve",
    "score",
    "structural_dissimilarity",
]
