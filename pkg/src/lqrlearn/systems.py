"""Plant and cost descriptions, plus the iterate container shared by all learners."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CovarianceError
from .linalg import require_symmetric

PBH_SV_TOL = 1e-9


def _as_matrix(m, name):
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ConfigError(f"{name} must be a 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ConfigError(f"{name} contains non-finite entries")
    return m


@dataclass
class LtiSystem:
    """The true plant ``xdot = A x + B u + E e``: known only to the simulator.

    ``sigma`` is the covariance of the zero-mean Gaussian disturbance e(t).
    Learner code never receives this type; that separation is what makes the
    learning "offline from data".
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.A = _as_matrix(self.A, "A")
        self.B = _as_matrix(self.B, "B")
        self.E = _as_matrix(self.E, "E")
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ConfigError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise ConfigError(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.E.shape[0] != n:
            raise ConfigError(f"E has {self.E.shape[0]} rows, expected {n}")
        sig = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sig.shape != (self.p, self.p):
            raise ConfigError(f"sigma must be {self.p}x{self.p}, got {sig.shape}")
        sig = 0.5 * (sig + sig.T)
        if np.min(np.linalg.eigvalsh(sig)) < -1e-12:
            raise CovarianceError("sigma must be positive semidefinite")
        self.sigma = sig

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.E.shape[1]


@dataclass
class CostWeights:
    """Quadratic running-cost weights: Q (state, PSD) and R (input, PD)."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.Q = require_symmetric(_as_matrix(self.Q, "Q"), what="Q")
        self.R = require_symmetric(_as_matrix(self.R, "R"), what="R")
        if np.min(np.linalg.eigvalsh(self.Q)) < -1e-12:
            raise ConfigError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise ConfigError("R must be positive definite")

    def effective_state_weight(self, K):
        """Q + K'RK, the state weight under feedback u = -Kx."""
        K = np.atleast_2d(np.asarray(K, dtype=float))
        return self.Q + K.T @ self.R @ K


@dataclass
class PolicyIterate:
    """One policy-iteration step: cost matrix P, next gain K, and diagnostics.

    ``theta_condition`` and ``residual`` are only meaningful for data-driven
    iterates (they describe the regression solve); the model-based oracle
    leaves them at 0.
    """

    P: np.ndarray
    K: np.ndarray
    iteration: int
    lyap_residual: float = 0.0
    theta_condition: float = 0.0
    residual: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.P = require_symmetric(np.asarray(self.P, dtype=float), what="P")
        self.P = 0.5 * (self.P + self.P.T)
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))


# ---------------------------------------------------------------------------
# PBH structural checks (warn, never fail: the theory assumes them, the tool
# verifies them and tells the user when they look violated)
# ---------------------------------------------------------------------------


def check_stabilizability(sys: LtiSystem, tol=PBH_SV_TOL):
    """PBH test: every unstable eigenvalue of A must be controllable through B.

    Returns True/False and emits a warning on failure.
    """
    ok = _pbh(sys.A, sys.B, tol)
    if not ok:
        warnings.warn(
            "PBH stabilizability test failed: an unstable mode of A is not "
            "reachable through B; gain synthesis may not stabilize the plant",
            stacklevel=2,
        )
    return ok


def check_detectability(A, Q, tol=PBH_SV_TOL):
    """PBH test on (Q^(1/2), A): unstable modes must be visible in the cost."""
    q = require_symmetric(np.asarray(Q, dtype=float), what="Q")
    w, v = np.linalg.eigh(q)
    w = np.clip(w, 0.0, None)
    qroot = v @ np.diag(np.sqrt(w)) @ v.T
    ok = _pbh(np.asarray(A, dtype=float).T, qroot.T, tol)
    if not ok:
        warnings.warn(
            "PBH detectability test failed for (Q^(1/2), A): an unstable mode "
            "carries no cost, so the optimal gain may leave it unstable",
            stacklevel=2,
        )
    return ok


def _pbh(A, B, tol):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < 0:
            continue
        pencil = np.hstack([A - lam * np.eye(n), B]).astype(complex)
        sv = np.linalg.svd(pencil, compute_uv=False)
        if sv[-1] <= tol * max(sv[0], 1.0):
            return False
    return True
