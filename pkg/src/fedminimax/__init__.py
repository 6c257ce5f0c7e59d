"""Federated minimax optimization lab.

Normalized and orthonormalized momentum methods for federated saddle-point
problems under heavy-tailed gradient noise, with synthetic problems whose
convergence metrics are exact, statistically validated noise models, and a
runtime verifier for the protocol's per-round guarantees.
"""

from .core import (
    ALGORITHMS,
    HyperParams,
    NoiseModel,
    Shape,
    SmoothnessInfo,
    theorem1_schedule,
    theorem2_schedule,
)
from .fedopt import (
    ClientState,
    RoundRecord,
    RunTrace,
    ServerState,
    clip_step,
    local_momentum,
    muon_step,
    normalized_step,
    run,
    trace_from_csv,
    trace_to_csv,
)
from .linalg import newton_schulz_polar, orthonormality_defect, svd_polar
from .metrics import InvariantReport, auc_score, phi_value_and_grad, verify_invariants
from .noise import derive_stream, empirical_moment, sample
from .problems import (
    Dataset,
    MinimaxProblem,
    auc_loss,
    gen_imbalanced_data,
    load_dataset_csv,
    make_auc_problem,
    make_saddle_problem,
    save_dataset_csv,
    with_gradient_noise,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ClientState",
    "Dataset",
    "HyperParams",
    "InvariantReport",
    "MinimaxProblem",
    "NoiseModel",
    "RoundRecord",
    "RunTrace",
    "ServerState",
    "Shape",
    "SmoothnessInfo",
    "auc_loss",
    "auc_score",
    "clip_step",
    "derive_stream",
    "empirical_moment",
    "gen_imbalanced_data",
    "load_dataset_csv",
    "local_momentum",
    "make_auc_problem",
    "make_saddle_problem",
    "muon_step",
    "newton_schulz_polar",
    "normalized_step",
    "orthonormality_defect",
    "phi_value_and_grad",
    "run",
    "sample",
    "save_dataset_csv",
    "svd_polar",
    "theorem1_schedule",
    "theorem2_schedule",
    "trace_from_csv",
    "trace_to_csv",
    "verify_invariants",
    "with_gradient_noise",
]
