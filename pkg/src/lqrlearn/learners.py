"""Offline policy iteration from recorded data.

Two routes to the optimal gain, differing in what was recorded:

- exact one-shot mode: the disturbance was measured, so each iteration's
  regression includes a disturbance-coupling block and the solve is exact up
  to quadrature error — iterates track the model-based oracle step for step.
- episodic mode: the disturbance was not measured; its regression column is
  dropped and the remaining blocks are averaged over independent episodes so
  that the unmodeled disturbance terms average toward zero.

Plus a deliberately biased baseline (average the trajectories themselves,
then learn) that demonstrates *why* the episodic algorithm averages the
quadratic data blocks instead: plain trajectory averaging loses the state
covariance carried by the quadratic terms.

This module never sees the plant matrices.  Everything it consumes is
trajectory data, data matrices, and cost weights; that boundary is what
makes the result "learned" rather than "computed from the model".
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamatrices import (
    DataMatrices,
    average_matrices,
    build_matrices,
    check_rank_episodic,
    check_rank_exact,
    naive_average_trajectory,
)
from .errors import ConvergenceError, EstimationError, ExcitationError, ModeError
from .linalg import kron, smat, vec
from .systems import CostWeights, PolicyIterate
from .trajectory import format_float

CONDITION_WARN_THRESHOLD = 1e8
ITERATE_BLOWUP = 1e10


@dataclass
class LearnerConfig:
    """Iteration controls shared by every learning mode.

    ``K0`` must stabilize the true plant for the theory to apply; the
    learner cannot verify that without the model, so a destabilizing K0
    surfaces as iterate blow-up or non-convergence at runtime.
    """

    K0: np.ndarray = None
    tol: float = 1e-6
    max_iter: int = 50

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.K0 is not None:
            self.K0 = np.atleast_2d(np.asarray(self.K0, dtype=float))

    def initial_gain(self, n, m):
        if self.K0 is None:
            return np.zeros((m, n))
        if self.K0.shape != (m, n):
            raise ValueError(f"K0 must be {m}x{n}, got {self.K0.shape}")
        return self.K0.copy()


@dataclass
class RegressionSystem:
    """One iteration's least-squares problem Theta z = Phi.

    Unknown layout: [svec(P) | vec(K_next) | vec(disturbance coupling)],
    the last block present only in exact mode.
    """

    theta: np.ndarray
    phi: np.ndarray
    n: int
    m: int
    p: int = 0
    condition_number: float = np.inf
    residual: float = np.nan
    meta: dict = field(default_factory=dict)

    @property
    def has_disturbance_block(self):
        return self.p > 0

    @property
    def svec_len(self):
        return self.n * (self.n + 1) // 2

    def expected_columns(self):
        return self.svec_len + self.n * self.m + self.n * self.p


# ---------------------------------------------------------------------------
# Regression assembly
# ---------------------------------------------------------------------------


def _gain_blocks(dm: DataMatrices, K, w: CostWeights):
    n = dm.n
    K = np.atleast_2d(np.asarray(K, dtype=float))
    block_K = -2.0 * dm.Ixx @ kron(np.eye(n), K.T @ w.R) - 2.0 * dm.Ixu0 @ kron(np.eye(n), w.R)
    phi = -dm.Ixx @ vec(w.effective_state_weight(K))
    return block_K, phi


def assemble_exact(dm: DataMatrices, K, w: CostWeights):
    """Regression with the disturbance-coupling block (measured-disturbance mode)."""
    if dm.Ixe is None:
        raise ModeError("exact mode needs the disturbance block; build with include_e=True")
    block_K, phi = _gain_blocks(dm, K, w)
    theta = np.hstack([dm.Dxx, block_K, -2.0 * dm.Ixe])
    return RegressionSystem(theta=theta, phi=phi, n=dm.n, m=dm.m, p=dm.p)


def assemble_episodic(dm: DataMatrices, K, w: CostWeights):
    """Regression without the disturbance block, on episode-averaged data."""
    if not dm.averaged:
        raise ModeError("episodic assembly expects episode-averaged data matrices")
    block_K, phi = _gain_blocks(dm, K, w)
    theta = np.hstack([dm.Dxx, block_K])
    return RegressionSystem(theta=theta, phi=phi, n=dm.n, m=dm.m, p=0)


# ---------------------------------------------------------------------------
# The least-squares solve
# ---------------------------------------------------------------------------


def solve_iteration(rs: RegressionSystem):
    """Minimum-norm pseudoinverse solve of one iteration's regression.

    Returns (P, K_next, coupling) where ``coupling`` is the recovered
    disturbance-coupling matrix (None in episodic mode).  Emits a warning
    when the regression is conditioned worse than 1e8.  A rank-deficient
    regression raises an excitation error — except when the deficiency is
    confined to an exactly-zero disturbance block (a disturbance-free run in
    exact mode), where the minimum-norm solution correctly returns a zero
    coupling and the solve proceeds.
    """
    theta, phi = rs.theta, rs.phi
    ncols = theta.shape[1]
    if theta.shape[0] < ncols:
        raise ExcitationError(
            f"regression has {theta.shape[0]} rows for {ncols} unknowns",
            required_rank=ncols, achieved_rank=theta.shape[0],
        )
    sv = np.linalg.svd(theta, compute_uv=False)
    cutoff = max(theta.shape) * np.finfo(float).eps * sv[0] * 1e3 if sv[0] > 0 else 0.0
    rank = int(np.sum(sv > cutoff))
    if rank < ncols:
        deficiency_in_zero_tail = False
        if rs.has_disturbance_block:
            head = theta[:, : rs.svec_len + rs.n * rs.m]
            tail = theta[:, rs.svec_len + rs.n * rs.m :]
            tail_scale = np.linalg.norm(tail)
            head_rank, _ = _effective_rank(head)
            if tail_scale <= 1e-12 * max(1.0, np.linalg.norm(head)) and head_rank == head.shape[1]:
                deficiency_in_zero_tail = True
        if not deficiency_in_zero_tail:
            raise ExcitationError(
                f"regression matrix is rank deficient: rank {rank} of {ncols} "
                f"required (deficient subspace dimension {ncols - rank}); "
                "the exploration signal was not rich enough",
                required_rank=ncols, achieved_rank=rank, singular_values=sv,
            )
    z, _, _, _ = np.linalg.lstsq(theta, phi, rcond=None)
    rs.condition_number = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    rs.residual = float(np.linalg.norm(theta @ z - phi))
    if rs.condition_number > CONDITION_WARN_THRESHOLD:
        warnings.warn(
            f"regression condition number {rs.condition_number:.3e} exceeds "
            f"{CONDITION_WARN_THRESHOLD:.0e}; the solution may be noise-dominated",
            stacklevel=2,
        )
    ns = rs.svec_len
    P = smat(z[:ns])
    P = 0.5 * (P + P.T)
    K_next = z[ns : ns + rs.n * rs.m].reshape(rs.m, rs.n, order="F")
    coupling = None
    if rs.has_disturbance_block:
        coupling = z[ns + rs.n * rs.m :].reshape(rs.p, rs.n, order="F")
    return P, K_next, coupling


def _effective_rank(mat):
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv
    cutoff = max(mat.shape) * np.finfo(float).eps * sv[0] * 1e3
    return int(np.sum(sv > cutoff)), sv


# ---------------------------------------------------------------------------
# Learning loops
# ---------------------------------------------------------------------------


def _iterate(dm: DataMatrices, w: CostWeights, cfg: LearnerConfig, exact: bool):
    assemble = assemble_exact if exact else assemble_episodic
    K = cfg.initial_gain(dm.n, dm.m)
    history = []
    P_prev = None
    converged = False
    for it in range(cfg.max_iter):
        rs = assemble(dm, K, w)
        P, K_next, coupling = solve_iteration(rs)
        if not np.all(np.isfinite(P)) or np.linalg.norm(P) > ITERATE_BLOWUP:
            raise ConvergenceError(
                f"iterate {it} blew up (||P|| = {np.linalg.norm(P):.3e}); "
                "is the initial gain stabilizing and the data informative?",
                history=history,
            )
        iterate = PolicyIterate(
            P=P, K=K_next, iteration=it,
            theta_condition=rs.condition_number,
            residual=rs.residual,
        )
        if coupling is not None:
            iterate.extra["disturbance_coupling"] = coupling
        if P_prev is not None:
            iterate.extra["delta_P"] = float(np.linalg.norm(P - P_prev, "fro"))
        history.append(iterate)
        if P_prev is not None and np.linalg.norm(P - P_prev, "fro") < cfg.tol:
            converged = True
            break
        P_prev = P
        K = K_next
    if not converged:
        raise ConvergenceError(
            f"no convergence within {cfg.max_iter} iterations "
            f"(last step size {history[-1].extra.get('delta_P', np.nan):.3e})",
            history=history,
        )
    return history, converged


def _as_single_matrices(dms, need_e):
    """Accept one DataMatrices or a list; lists are row-stacked (shared unknowns)."""
    if isinstance(dms, DataMatrices):
        return dms
    dms = list(dms)
    if len(dms) == 1:
        return dms[0]
    first = dms[0]
    with_e = all(dm.Ixe is not None for dm in dms)
    if need_e and not with_e:
        raise ModeError("every stacked episode needs the disturbance block")
    return DataMatrices(
        Dxx=np.vstack([dm.Dxx for dm in dms]),
        Ixx=np.vstack([dm.Ixx for dm in dms]),
        Ixu0=np.vstack([dm.Ixu0 for dm in dms]),
        Ixe=np.vstack([dm.Ixe for dm in dms]) if with_e else None,
        n=first.n, m=first.m, p=first.p,
        interval_count=sum(dm.interval_count for dm in dms),
        interval_length=first.interval_length,
        averaged=False,
    )


def learn_exact(dms, w: CostWeights, cfg: LearnerConfig = None):
    """One-shot learning from a measured-disturbance run.

    With an informative batch this recovers the model-based iteration
    exactly up to quadrature error: one recorded batch, iterated offline to
    the optimal gain.  Returns (history, converged).
    """
    cfg = cfg or LearnerConfig()
    dm = _as_single_matrices(dms, need_e=True)
    if dm.Ixe is None:
        raise ModeError("exact learning needs the disturbance block (controlled-environment data)")
    report = check_rank_exact(dm)
    if not report.passed:
        # A disturbance-free recording (e identically zero) legitimately
        # zeroes the Ixe block; the remaining blocks must still be rich.
        if np.linalg.norm(dm.Ixe) <= 1e-12 * max(1.0, np.linalg.norm(dm.Ixx)):
            sub = check_rank_episodic(dm)
            if not sub.passed:
                raise ExcitationError(
                    str(sub), required_rank=sub.required_rank,
                    achieved_rank=sub.achieved_rank, singular_values=sub.singular_values,
                )
            warnings.warn(
                "disturbance block is numerically zero; proceeding with a zero "
                "coupling estimate", stacklevel=2,
            )
        else:
            raise ExcitationError(
                str(report), required_rank=report.required_rank,
                achieved_rank=report.achieved_rank, singular_values=report.singular_values,
            )
    return _iterate(dm, w, cfg, exact=True)


def learn_episodic(dms, w: CostWeights, cfg: LearnerConfig = None):
    """Sample-average learning from unmeasured-disturbance episodes.

    ``dms`` is a list of per-episode data matrices (or one already-averaged
    set).  Blocks are averaged entrywise across episodes, the disturbance
    column is dropped, and the same offline iteration runs on the averaged
    regression.  Accuracy improves with the number of episodes; a single
    episode can fail outright (see the sweep command).  Returns
    (history, converged).
    """
    cfg = cfg or LearnerConfig()
    if isinstance(dms, DataMatrices):
        avg = dms if dms.averaged else average_matrices([dms])
    else:
        dms = list(dms)
        avg = dms[0] if len(dms) == 1 and dms[0].averaged else average_matrices(dms)
    report = check_rank_episodic(avg)
    if not report.passed:
        raise ExcitationError(
            str(report), required_rank=report.required_rank,
            achieved_rank=report.achieved_rank, singular_values=report.singular_values,
        )
    return _iterate(avg, w, cfg, exact=False)


def learn_naive_average(trajs, w: CostWeights, cfg: LearnerConfig = None):
    """Baseline: average the trajectories pointwise, then learn from the result.

    Quadratic data built from a pre-averaged trajectory misses the state
    covariance, so at nonzero noise this lands measurably farther from the
    optimal gain than :func:`learn_episodic` on the same episodes.  It
    exists to demonstrate that failure mode.  Returns (history, converged).
    """
    cfg = cfg or LearnerConfig()
    mean_traj = naive_average_trajectory(trajs)
    dm = build_matrices(mean_traj, include_e=False)
    dm.averaged = True  # it is an average, just of the wrong quantity
    dm.meta["naive_trajectory_average"] = True
    report = check_rank_episodic(dm)
    if not report.passed:
        raise ExcitationError(
            str(report), required_rank=report.required_rank,
            achieved_rank=report.achieved_rank, singular_values=report.singular_values,
        )
    return _iterate(dm, w, cfg, exact=False)


# ---------------------------------------------------------------------------
# Covariance-gap diagnostic
# ---------------------------------------------------------------------------


def covariance_gap_residual(trajs, P, K_pair, w: CostWeights, interval_index=0):
    """The term trajectory-averaging drops: the state-covariance part of the identity.

    Evaluates, over interval ``interval_index`` with empirical covariances
    Sigma(t) across episodes,

        Tr(P (Sigma(t+T) - Sigma(t)))
          - 2 int Tr(K_k' R K_next Sigma) dtau + int Tr(Qbar_k Sigma) dtau.

    Under the per-episode identity this residual is exactly the piece
    carried by averaged quadratic data and absent from pre-averaged
    trajectories; it grows linearly with the noise covariance and is zero in
    a noise-free run.
    """
    trajs = list(trajs)
    if len(trajs) < 30:
        raise EstimationError(
            f"need at least 30 episodes to estimate state covariances, got {len(trajs)}"
        )
    first = trajs[0]
    spi = first.steps_per_interval
    lo = interval_index * spi
    hi = lo + spi
    if hi > first.states.shape[0] - 1:
        raise EstimationError(f"interval index {interval_index} is out of range")
    X = np.stack([tr.states[lo : hi + 1] for tr in trajs], axis=0)  # (N, spi+1, n)
    mean = X.mean(axis=0)
    centered = X - mean
    # biased (1/N) covariance: matches the gap between averaged quadratic
    # blocks and the quadratic of the averaged trajectory exactly
    sigmas = np.einsum("eti,etj->tij", centered, centered) / len(trajs)
    K_k, K_next = (np.atleast_2d(np.asarray(k, dtype=float)) for k in K_pair)
    P = np.asarray(P, dtype=float)
    boundary = float(np.trace(P @ (sigmas[-1] - sigmas[0])))
    cross_w = K_k.T @ w.R @ K_next
    qbar = w.effective_state_weight(K_k)
    cross = np.einsum("ij,tji->t", cross_w, sigmas)
    state = np.einsum("ij,tji->t", qbar, sigmas)
    dt = first.dt
    trapz = getattr(np, "trapezoid", None) or np.trapz
    integ_cross = float(trapz(cross, dx=dt))
    integ_state = float(trapz(state, dx=dt))
    return boundary - 2.0 * integ_cross + integ_state


# ---------------------------------------------------------------------------
# Run report
# ---------------------------------------------------------------------------


def write_run_report(history, converged, path, K_ref=None):
    """Per-iteration CSV: step sizes, conditioning, residuals, and the final gain."""
    lines = ["iteration,delta_P,gain_delta_vs_ref,condition_number,residual"]
    for it in history:
        dp = it.extra.get("delta_P", np.nan)
        gd = np.nan
        if K_ref is not None:
            gd = float(np.max(np.abs(it.K - np.atleast_2d(K_ref))))
        lines.append(
            f"{it.iteration},{format_float(dp)},{format_float(gd)},"
            f"{format_float(it.theta_condition)},{format_float(it.residual)}"
        )
    final = history[-1]
    lines.append(f"# converged = {int(converged)}")
    lines.append(f"# iterations = {len(history)}")
    lines.append("# final_gain = " + ";".join(format_float(v) for v in final.K.ravel(order="F")))
    lines.append("# final_P = " + ";".join(format_float(v) for v in final.P.ravel(order="F")))
    Path(path).write_text("\n".join(lines) + "\n")
