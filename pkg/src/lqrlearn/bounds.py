"""Perturbation accounting: how far noisy-data iterates can drift from noise-free ones.

The quantities here bound the effect of data-matrix perturbations on the
least-squares iterate through standard pseudoinverse perturbation theory:

- ``gamma1`` bounds the regression-matrix perturbation ||Delta Theta_k|| by
  a norm combination of the per-block deltas (a deterministic triangle /
  submultiplicativity inequality, asserted on every call);
- ``gamma2`` turns that into a first-order bound on the stacked
  (P, K) solution error, using ||Theta+|| = 1/sigma_min(Theta_nominal);
- ``verify_bound`` runs matched noise-free and noisy learning chains from
  identical exploration and start state, evaluating the bound empirically
  per iteration.  The bound neglects a second-order cross term, so rare
  violations at large noise are possible; they are reported, never hidden.

All norms are spectral (operator 2-) norms, consistent with the
pseudoinverse identity above.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamatrices import DataMatrices, average_matrices, build_matrices
from .errors import ConfigError, ExcitationError, LqrLearnError
from .learners import (
    LearnerConfig,
    assemble_episodic,
    solve_iteration,
)
from .linalg import kron, spectral_norm, svec, vec
from .signals import ExplorationSignal
from .simulate import generate_episodes, seed_stream, STREAM_SIGNAL
from .systems import CostWeights, LtiSystem
from .trajectory import format_float

GAMMA1_SLACK = 1e-9


def delta_matrices(realization: DataMatrices, reference: DataMatrices):
    """Entrywise block differences (realization minus reference average).

    ``reference`` must be an episode average (it stands in for the
    expectation); ``realization`` may be any batch — a single episode, or
    the N-episode mean a learner actually consumed.
    """
    if not reference.averaged:
        raise ConfigError("reference side of the deltas must be an episode average")
    for name in ("Dxx", "Ixx", "Ixu0"):
        a, b = getattr(realization, name), getattr(reference, name)
        if a.shape != b.shape:
            raise ConfigError(f"shape mismatch on {name}: {a.shape} vs {b.shape}")
    return (
        realization.Dxx - reference.Dxx,
        realization.Ixx - reference.Ixx,
        realization.Ixu0 - reference.Ixu0,
    )


def gamma1(deltas, K, R):
    """First-level bound: ||Delta Theta|| <= ||dDxx|| + 2||dIxx||·||K'R|| + 2||dIxu0||·||R||.

    Also assembles Delta Theta explicitly and asserts the inequality — it is
    a deterministic norm fact, so a violation means a bug, not bad luck.
    """
    d_dxx, d_ixx, d_ixu0 = deltas
    K = np.atleast_2d(np.asarray(K, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = K.shape[1]
    value = (
        spectral_norm(d_dxx)
        + 2.0 * spectral_norm(d_ixx) * spectral_norm(K.T @ R)
        + 2.0 * spectral_norm(d_ixu0) * spectral_norm(R)
    )
    delta_theta = np.hstack(
        [d_dxx, -2.0 * d_ixx @ kron(np.eye(n), K.T @ R) - 2.0 * d_ixu0 @ kron(np.eye(n), R)]
    )
    realized = spectral_norm(delta_theta)
    if realized > value + GAMMA1_SLACK * max(1.0, value):
        raise LqrLearnError(
            f"norm inequality violated: ||Delta Theta|| = {realized:.6e} > "
            f"gamma1 = {value:.6e}; this indicates an assembly bug"
        )
    return float(value)


def gamma2(rs_nominal, gamma1_value, delta_ixx, qbar):
    """Solution-error bound: ||Theta+||^2 ||Phi|| g1 + ||Theta+|| ||dIxx|| ||vec(Qbar)||."""
    sv = np.linalg.svd(rs_nominal.theta, compute_uv=False)
    cutoff = max(rs_nominal.theta.shape) * np.finfo(float).eps * float(sv[0])
    if sv[-1] <= cutoff:
        raise ExcitationError("nominal regression matrix is rank deficient")
    pinv_norm = 1.0 / float(sv[-1])
    phi_norm = float(np.linalg.norm(rs_nominal.phi))
    qbar_norm = float(np.linalg.norm(vec(qbar)))
    return (
        pinv_norm**2 * phi_norm * gamma1_value
        + pinv_norm * spectral_norm(delta_ixx) * qbar_norm
    )


# ---------------------------------------------------------------------------
# Empirical verification over matched runs
# ---------------------------------------------------------------------------


@dataclass
class BoundRow:
    """All Theorem-level factors for one (seed, iteration) pair."""

    seed: int
    iteration: int
    delta_dxx: float
    delta_ixx: float
    delta_ixu0: float
    gamma1: float
    theta_pinv_norm: float
    phi_norm: float
    qbar_vec_norm: float
    gamma2: float
    realized_error: float
    realized_gain_error: float
    bound_satisfied: bool
    neighborhood_lhs: float
    neighborhood_rhs: float

    def recompute_gamma2(self):
        """Rebuild gamma2 from the stored factors (must match exactly)."""
        return (
            self.theta_pinv_norm**2 * self.phi_norm * self.gamma1
            + self.theta_pinv_norm * self.delta_ixx * self.qbar_vec_norm
        )


@dataclass
class BoundReport:
    rows: list
    meta: dict = field(default_factory=dict)

    def for_seed(self, seed):
        return [r for r in self.rows if r.seed == seed]

    def final_rows(self):
        """Last-iteration row of each seed, in seed order."""
        out = {}
        for r in self.rows:
            cur = out.get(r.seed)
            if cur is None or r.iteration > cur.iteration:
                out[r.seed] = r
        return [out[s] for s in sorted(out)]

    def satisfied_fraction(self):
        if not self.rows:
            return float("nan")
        return sum(r.bound_satisfied for r in self.rows) / len(self.rows)

    def to_csv(self, path):
        cols = [
            "seed", "iteration", "delta_dxx", "delta_ixx", "delta_ixu0",
            "gamma1", "theta_pinv_norm", "phi_norm", "qbar_vec_norm", "gamma2",
            "realized_error", "realized_gain_error", "bound_satisfied",
            "neighborhood_lhs", "neighborhood_rhs",
        ]
        lines = [",".join(cols)]
        for r in self.rows:
            vals = [
                str(r.seed), str(r.iteration),
                format_float(r.delta_dxx), format_float(r.delta_ixx),
                format_float(r.delta_ixu0), format_float(r.gamma1),
                format_float(r.theta_pinv_norm), format_float(r.phi_norm),
                format_float(r.qbar_vec_norm), format_float(r.gamma2),
                format_float(r.realized_error), format_float(r.realized_gain_error),
                str(int(r.bound_satisfied)),
                format_float(r.neighborhood_lhs), format_float(r.neighborhood_rhs),
            ]
            lines.append(",".join(vals))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path):
        lines = Path(path).read_text().splitlines()
        rows = []
        for line in lines[1:]:
            f = line.split(",")
            rows.append(BoundRow(
                seed=int(f[0]), iteration=int(f[1]),
                delta_dxx=float(f[2]), delta_ixx=float(f[3]), delta_ixu0=float(f[4]),
                gamma1=float(f[5]), theta_pinv_norm=float(f[6]), phi_norm=float(f[7]),
                qbar_vec_norm=float(f[8]), gamma2=float(f[9]),
                realized_error=float(f[10]), realized_gain_error=float(f[11]),
                bound_satisfied=bool(int(f[12])),
                neighborhood_lhs=float(f[13]), neighborhood_rhs=float(f[14]),
            ))
        return cls(rows=rows)


def _episodic_average(sys, sig, N, duration, dt, master_seed, interval_length,
                      interval_count, x0=None):
    episodes = generate_episodes(
        sys, sig, N, duration, dt, master_seed, x0=x0,
        record_disturbance=False,
        interval_length=interval_length, interval_count=interval_count,
    )
    return average_matrices([build_matrices(tr) for tr in episodes])


def verify_bound(sys: LtiSystem, w: CostWeights, cfg: LearnerConfig, N, seeds,
                 exploration, dt, interval_length, interval_count, x0=None):
    """Empirically check the solution-error bound over matched learning chains.

    For each master seed: simulate a noise-free reference batch and an
    N-episode noisy batch with identical exploration and start state, then
    iterate both regressions **from the shared reference gain sequence** —
    at every step both sides are assembled at the same K_k, so the solution
    difference isolates the data perturbation the bound speaks about.  The
    chain advances with the reference gains and stops when the reference
    iteration has converged.

    ``exploration`` is either a fixed :class:`ExplorationSignal` shared by
    all seeds, or a dict with keys ``count``, ``amplitude``, ``freq_range``,
    drawn independently under each master seed (matching the episode
    pipeline).  This runs on the true plant and therefore lives on the
    simulator side of the module boundary: it is a validation harness, not
    a learner.
    """
    duration = interval_count * interval_length
    nominal_sys = LtiSystem(A=sys.A, B=sys.B, E=sys.E, sigma=np.zeros_like(sys.sigma))
    rows = []
    for seed in seeds:
        if isinstance(exploration, ExplorationSignal):
            sig = exploration
        else:
            sig = ExplorationSignal.draw(
                exploration["count"], exploration["amplitude"],
                exploration["freq_range"], seed_stream(seed, STREAM_SIGNAL),
            )
        dm_nom = _episodic_average(
            nominal_sys, sig, 1, duration, dt, seed, interval_length, interval_count, x0=x0)
        dm_noisy = _episodic_average(
            sys, sig, N, duration, dt, seed, interval_length, interval_count, x0=x0)
        deltas = delta_matrices(dm_noisy, dm_nom)

        K = cfg.initial_gain(sys.n, sys.m)
        P_nom_prev = None
        chain = []  # (partial row dict, P_nom, P_noisy) per iteration
        for it in range(cfg.max_iter):
            rs_nom = assemble_episodic(dm_nom, K, w)
            P_nom, K_nom_next, _ = solve_iteration(rs_nom)
            rs_noisy = assemble_episodic(dm_noisy, K, w)
            P_noisy, K_noisy_next, _ = solve_iteration(rs_noisy)

            qbar = w.effective_state_weight(K)
            g1 = gamma1(deltas, K, w.R)
            g2 = gamma2(rs_nom, g1, deltas[1], qbar)
            stacked = np.concatenate([
                svec(P_noisy) - svec(P_nom),
                vec(K_noisy_next) - vec(K_nom_next),
            ])
            sv_min = float(np.linalg.svd(rs_nom.theta, compute_uv=False)[-1])
            partial = dict(
                seed=int(seed), iteration=it,
                delta_dxx=spectral_norm(deltas[0]),
                delta_ixx=spectral_norm(deltas[1]),
                delta_ixu0=spectral_norm(deltas[2]),
                gamma1=g1,
                theta_pinv_norm=1.0 / sv_min,
                phi_norm=float(np.linalg.norm(rs_nom.phi)),
                qbar_vec_norm=float(np.linalg.norm(vec(qbar))),
                gamma2=g2,
                realized_error=float(np.linalg.norm(stacked)),
                realized_gain_error=float(np.linalg.norm(vec(K_noisy_next) - vec(K_nom_next))),
                bound_satisfied=bool(np.linalg.norm(stacked) <= g2),
            )
            chain.append((partial, P_nom, P_noisy))
            if P_nom_prev is not None and np.linalg.norm(P_nom - P_nom_prev, "fro") < cfg.tol:
                break
            P_nom_prev = P_nom
            K = K_nom_next
        P_opt_nom = chain[-1][1]
        for partial, P_nom, P_noisy in chain:
            rows.append(BoundRow(
                neighborhood_lhs=float(np.linalg.norm(P_noisy - P_opt_nom, "fro")),
                neighborhood_rhs=float(partial["gamma2"]
                                       + np.linalg.norm(P_nom - P_opt_nom, "fro")),
                **partial,
            ))
    return BoundReport(rows=rows, meta={"N": N, "seeds": list(map(int, seeds))})
