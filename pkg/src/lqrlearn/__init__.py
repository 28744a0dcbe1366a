"""Offline learning of optimal state-feedback gains from disturbed trajectory data.

The package simulates a linear plant driven by control, exploration, and an
exogenous disturbance; turns stored trajectories into integral data
matrices; and iterates a least-squares policy evaluation/update loop to the
LQR-optimal gain — exactly when the disturbance was recorded, approximately
(by averaging over episodes) when it was not.  A model-based Riccati
iteration and explicit perturbation bounds provide the reference answers
everything is validated against.
"""

from .bounds import BoundReport, delta_matrices, gamma1, gamma2, verify_bound
from .config import ExperimentConfig, canonical_json
from .datamatrices import (
    DataMatrices,
    RankReport,
    average_matrices,
    build_matrices,
    check_rank_episodic,
    check_rank_exact,
    load_matrices,
    naive_average_trajectory,
    save_matrices,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    CovarianceError,
    DivergenceError,
    EstimationError,
    ExcitationError,
    GridError,
    LqrLearnError,
    ModeError,
    StabilityError,
    SymmetryError,
)
from .estimators import EpisodicLqr, ExactOneShotLqr, NaiveAveragedLqr
from .learners import (
    LearnerConfig,
    RegressionSystem,
    assemble_episodic,
    assemble_exact,
    covariance_gap_residual,
    learn_episodic,
    learn_exact,
    learn_naive_average,
    solve_iteration,
    write_run_report,
)
from .linalg import (
    duplication,
    is_hurwitz,
    kron,
    lyapunov_residual,
    smat,
    solve_lyapunov,
    spectral_norm,
    svec,
    unvec,
    vec,
)
from .riccati import are_residual, closed_loop_eigs, kleinman_iterate
from .signals import ExplorationSignal, exploration_value
from .simulate import generate_episodes, seed_stream, simulate, simulate_episode
from .systems import (
    CostWeights,
    LtiSystem,
    PolicyIterate,
    check_detectability,
    check_stabilizability,
)
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "delta_matrices", "gamma1", "gamma2", "verify_bound",
    "ExperimentConfig", "canonical_json",
    "DataMatrices", "RankReport", "average_matrices", "build_matrices",
    "check_rank_episodic", "check_rank_exact", "load_matrices",
    "naive_average_trajectory", "save_matrices",
    "ConfigError", "ConvergenceError", "CovarianceError", "DivergenceError",
    "EstimationError", "ExcitationError", "GridError", "LqrLearnError",
    "ModeError", "StabilityError", "SymmetryError",
    "EpisodicLqr", "ExactOneShotLqr", "NaiveAveragedLqr",
    "LearnerConfig", "RegressionSystem", "assemble_episodic", "assemble_exact",
    "covariance_gap_residual", "learn_episodic", "learn_exact",
    "learn_naive_average", "solve_iteration", "write_run_report",
    "duplication", "is_hurwitz", "kron", "lyapunov_residual", "smat",
    "solve_lyapunov", "spectral_norm", "svec", "unvec", "vec",
    "are_residual", "closed_loop_eigs", "kleinman_iterate",
    "ExplorationSignal", "exploration_value",
    "generate_episodes", "seed_stream", "simulate", "simulate_episode",
    "CostWeights", "LtiSystem", "PolicyIterate",
    "check_detectability", "check_stabilizability",
    "Trajectory",
    "__version__",
]
