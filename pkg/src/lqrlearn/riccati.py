"""Model-based policy iteration: the ground-truth oracle the learners are judged against."""

import numpy as np

from .errors import ConvergenceError, StabilityError
from .linalg import is_hurwitz, solve_lyapunov, lyapunov_residual
from .systems import CostWeights, LtiSystem, PolicyIterate


def closed_loop_eigs(sys: LtiSystem, K):
    """Spectrum of A - BK, sorted by ascending real part."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    eigs = np.linalg.eigvals(sys.A - sys.B @ K)
    return eigs[np.argsort(eigs.real)]


def are_residual(sys: LtiSystem, w: CostWeights, P):
    """Frobenius norm of ``A'P + PA + Q - P B R^{-1} B' P``."""
    P = 0.5 * (np.asarray(P, dtype=float) + np.asarray(P, dtype=float).T)
    A, B = sys.A, sys.B
    gain_term = P @ B @ np.linalg.solve(w.R, B.T @ P)
    return float(np.linalg.norm(A.T @ P + P @ A + w.Q - gain_term))


def kleinman_iterate(sys: LtiSystem, w: CostWeights, K0=None, tol=1e-10, max_iter=50):
    """Alternate Lyapunov policy evaluation and gain update until P stops moving.

    Starting from a stabilizing gain K0 (default zero, valid when A itself is
    stable), each step solves ``(A-BK)'P + P(A-BK) + Q + K'RK = 0`` and sets
    the next gain to ``R^{-1} B' P``.  The P sequence decreases monotonically
    to the stabilizing solution of the quadratic matrix equation
    ``A'P + PA + Q - P B R^{-1} B' P = 0``.

    Returns
    -------
    (history, converged) : list of PolicyIterate, bool
        ``history[k]`` holds (P_k, K_{k+1}).  ``converged`` is True when
        ``||P_k - P_{k-1}||_F < tol`` was met within ``max_iter`` steps.

    Raises
    ------
    StabilityError
        If A - B K0 is not Hurwitz (the iteration is undefined).
    ConvergenceError
        If the tolerance is not met in ``max_iter`` steps; carries the history.
    """
    n, m = sys.n, sys.m
    K = np.zeros((m, n)) if K0 is None else np.atleast_2d(np.asarray(K0, dtype=float))
    if K.shape != (m, n):
        raise ValueError(f"K0 must be {m}x{n}, got {K.shape}")
    if not is_hurwitz(sys.A - sys.B @ K):
        raise StabilityError("initial gain K0 does not stabilize the plant")

    history = []
    P_prev = None
    for it in range(max_iter):
        Ak = sys.A - sys.B @ K
        Qbar = w.effective_state_weight(K)
        P = solve_lyapunov(Ak, Qbar)
        K_next = np.linalg.solve(w.R, sys.B.T @ P)
        history.append(
            PolicyIterate(
                P=P,
                K=K_next,
                iteration=it,
                lyap_residual=lyapunov_residual(Ak, Qbar, P),
            )
        )
        if P_prev is not None and np.linalg.norm(P - P_prev, "fro") < tol:
            return history, True
        P_prev = P
        K = K_next
    raise ConvergenceError(
        f"policy iteration did not meet tol={tol} within {max_iter} steps",
        history=history,
    )
