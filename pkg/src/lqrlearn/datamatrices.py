"""From recorded trajectories to regression data: quadratic differences and integrals.

Per interval [t_i, t_i + T] the learners need
  - the endpoint difference of the state quadratic form (columns folded to
    the symmetric half-vector basis),
  - integrals of x (x) x, x (x) u0 and, in controlled-environment mode,
    x (x) e.

Integrals of the smooth signals use the trapezoidal rule on the dt grid.
The disturbance product is integrated consistently with how the disturbance
was generated: e is piecewise constant per integrator step, so each step
contributes (trapezoidal step integral of x) times the held value.  Running
a plain trapezoid through e's jump discontinuities would systematically
misweight the product and visibly bias the recovered disturbance coupling.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridError, ModeError
from .linalg import duplication
from .trajectory import Trajectory, format_float

RANK_SAFETY_FACTOR = 1e3


@dataclass
class DataMatrices:
    """Stacked per-interval regression blocks from one episode (or an episode average)."""

    Dxx: np.ndarray          # (l, n(n+1)/2) svec-folded quadratic differences
    Ixx: np.ndarray          # (l, n*n)
    Ixu0: np.ndarray         # (l, n*m)
    Ixe: np.ndarray = None   # (l, n*p) when disturbance was recorded
    n: int = 0
    m: int = 0
    p: int = 0
    interval_count: int = 0
    interval_length: float = 0.0
    averaged: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = {self.Dxx.shape[0], self.Ixx.shape[0], self.Ixu0.shape[0]}
        if self.Ixe is not None:
            rows.add(self.Ixe.shape[0])
        if len(rows) != 1:
            raise ConfigError(f"inconsistent row counts across blocks: {sorted(rows)}")

    @property
    def rows(self):
        return self.Dxx.shape[0]

    @property
    def has_disturbance_block(self):
        return self.Ixe is not None


@dataclass
class RankReport:
    """Outcome of an excitation (column-rank) check, with the full spectrum attached."""

    passed: bool
    required_rank: int
    achieved_rank: int
    singular_values: np.ndarray
    blocks: str

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        return (
            f"rank check [{self.blocks}]: {state} "
            f"(achieved {self.achieved_rank}, required {self.required_rank})"
        )


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def _interval_layout(traj: Trajectory):
    spi = traj.steps_per_interval
    l = traj.interval_count
    if traj.states.shape[0] - 1 < l * spi:
        raise GridError(
            f"trajectory has {traj.states.shape[0] - 1} steps, "
            f"needs {l * spi} for {l} intervals"
        )
    return l, spi


def build_matrices(traj: Trajectory, include_e=False):
    """Extract all per-interval regression blocks from one episode."""
    if include_e and not traj.has_disturbance:
        raise ModeError(
            "disturbance block requested but this trajectory has no recorded "
            "disturbance (was it simulated in uncertain-environment mode?)"
        )
    l, spi = _interval_layout(traj)
    n, m = traj.n, traj.m
    dt = traj.dt
    X = traj.states[: l * spi + 1]
    U = traj.inputs[: l * spi + 1]

    xx = np.einsum("ti,tj->tij", X, X).reshape(X.shape[0], n * n)
    xu = np.einsum("ti,tq->tiq", X, U).reshape(X.shape[0], n * m)

    endpoints = xx[::spi]
    Dxx = (endpoints[1 : l + 1] - endpoints[:l]) @ duplication(n)

    def interval_trapezoids(Y):
        step_inc = 0.5 * dt * (Y[1:] + Y[:-1])
        return step_inc.reshape(l, spi, -1).sum(axis=1)

    Ixx = interval_trapezoids(xx)
    Ixu0 = interval_trapezoids(xu)

    Ixe = None
    p = traj.p
    if include_e:
        e_steps = traj.disturbances[: l * spi]  # row k: value held on [t_k, t_k + dt)
        x_step_int = 0.5 * dt * (X[1:] + X[:-1])  # (steps, n) per-step integral of x
        xe = np.einsum("ki,kq->kiq", x_step_int, e_steps).reshape(l * spi, n * p)
        Ixe = xe.reshape(l, spi, -1).sum(axis=1)

    return DataMatrices(
        Dxx=Dxx, Ixx=Ixx, Ixu0=Ixu0, Ixe=Ixe,
        n=n, m=m, p=p,
        interval_count=l, interval_length=traj.interval_length,
        averaged=False,
        meta={"episode_seed": traj.episode_seed, **traj.meta},
    )


# ---------------------------------------------------------------------------
# Rank checks
# ---------------------------------------------------------------------------


def _rank_of(stack):
    sv = np.linalg.svd(stack, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, sv
    cutoff = max(stack.shape) * np.finfo(float).eps * sv[0] * RANK_SAFETY_FACTOR
    return int(np.sum(sv > cutoff)), sv


def _fold_columns(Ixx, n):
    return Ixx @ duplication(n)


def check_rank_exact(dm: DataMatrices):
    """Full-information excitation check on [Ixx Ixu0 Ixe] (Ixx in the folded basis)."""
    if dm.Ixe is None:
        raise ModeError("exact-mode rank check needs the disturbance block")
    required = dm.n * (dm.n + 1) // 2 + dm.n * dm.m + dm.n * dm.p
    stack = np.hstack([_fold_columns(dm.Ixx, dm.n), dm.Ixu0, dm.Ixe])
    achieved, sv = _rank_of(stack)
    return RankReport(achieved >= required, required, achieved, sv, "Ixx|Ixu0|Ixe")


def check_rank_episodic(dm: DataMatrices):
    """Unmeasured-disturbance excitation check on [Ixx Ixu0]."""
    required = dm.n * (dm.n + 1) // 2 + dm.n * dm.m
    stack = np.hstack([_fold_columns(dm.Ixx, dm.n), dm.Ixu0])
    achieved, sv = _rank_of(stack)
    return RankReport(achieved >= required, required, achieved, sv, "Ixx|Ixu0")


# ---------------------------------------------------------------------------
# Episode averaging and the biased trajectory-mean baseline
# ---------------------------------------------------------------------------


def average_matrices(dms):
    """Entrywise mean of each block across episodes (fixed episode order)."""
    dms = list(dms)
    if not dms:
        raise ConfigError("cannot average an empty episode list")
    first = dms[0]
    for dm in dms:
        if dm.averaged:
            raise ConfigError("refusing to average already-averaged data matrices")
        if (dm.rows, dm.n, dm.m) != (first.rows, first.n, first.m):
            raise ConfigError("episodes have mismatched data-matrix shapes")
        if abs(dm.interval_length - first.interval_length) > 1e-12:
            raise ConfigError("episodes have mismatched interval grids")
    with_e = all(dm.Ixe is not None for dm in dms)
    return DataMatrices(
        Dxx=np.mean([dm.Dxx for dm in dms], axis=0),
        Ixx=np.mean([dm.Ixx for dm in dms], axis=0),
        Ixu0=np.mean([dm.Ixu0 for dm in dms], axis=0),
        Ixe=np.mean([dm.Ixe for dm in dms], axis=0) if with_e else None,
        n=first.n, m=first.m, p=first.p,
        interval_count=first.interval_count,
        interval_length=first.interval_length,
        averaged=True,
        meta={"episode_count": len(dms)},
    )


def naive_average_trajectory(trajs):
    """Pointwise mean trajectory across episodes.

    This is the tempting-but-biased route to noise reduction: averaging
    states *before* forming quadratic terms drops the state covariance, so
    matrices built from the result systematically underestimate E{x (x) x}.
    It exists as a baseline; see ``learners.learn_naive_average``.
    """
    trajs = list(trajs)
    if not trajs:
        raise ConfigError("cannot average an empty trajectory list")
    first = trajs[0]
    for tr in trajs:
        if tr.times.shape != first.times.shape or not np.array_equal(tr.times, first.times):
            raise GridError("trajectories have mismatched time grids")
    states = np.mean([tr.states for tr in trajs], axis=0)
    inputs = np.mean([tr.inputs for tr in trajs], axis=0)
    with_e = all(tr.has_disturbance for tr in trajs)
    dist = np.mean([tr.disturbances for tr in trajs], axis=0) if with_e else None
    return Trajectory(
        dt=first.dt,
        times=first.times.copy(),
        states=states,
        inputs=inputs,
        disturbances=dist,
        interval_length=first.interval_length,
        interval_count=first.interval_count,
        episode_seed=first.episode_seed,
        meta={"naive_average_of": len(trajs)},
    )


# ---------------------------------------------------------------------------
# Persistence: one CSV file, sectioned per block
# ---------------------------------------------------------------------------

SVEC_CONVENTION = "upper-column-major-unscaled"


def save_matrices(dm: DataMatrices, path, source_hash=""):
    lines = []
    header = {
        "n": dm.n, "m": dm.m, "p": dm.p,
        "interval_count": dm.interval_count,
        "interval_length": format_float(dm.interval_length),
        "svec_convention": SVEC_CONVENTION,
        "averaged": int(dm.averaged),
        "has_disturbance_block": int(dm.Ixe is not None),
        "source_hash": source_hash,
    }
    for key, value in header.items():
        lines.append(f"# {key} = {value}")
    blocks = [("Dxx", dm.Dxx), ("Ixx", dm.Ixx), ("Ixu0", dm.Ixu0)]
    if dm.Ixe is not None:
        blocks.append(("Ixe", dm.Ixe))
    for name, block in blocks:
        lines.append(f"# section {name} rows={block.shape[0]} cols={block.shape[1]}")
        for row in block:
            lines.append(",".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrices(path):
    lines = Path(path).read_text().splitlines()
    header = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#") and " section " not in lines[i]:
        key, _, value = lines[i][1:].partition("=")
        header[key.strip()] = value.strip()
        i += 1
    blocks = {}
    while i < len(lines):
        if not lines[i].startswith("# section"):
            raise ConfigError(f"malformed data-matrix file at line {i + 1}")
        parts = lines[i].split()
        name = parts[2]
        rows = int(parts[3].split("=")[1])
        cols = int(parts[4].split("=")[1])
        i += 1
        data = np.array(
            [[float(v) for v in lines[i + r].split(",")] for r in range(rows)]
        ).reshape(rows, cols)
        blocks[name] = data
        i += rows
    try:
        return DataMatrices(
            Dxx=blocks["Dxx"], Ixx=blocks["Ixx"], Ixu0=blocks["Ixu0"],
            Ixe=blocks.get("Ixe"),
            n=int(header["n"]), m=int(header["m"]), p=int(header["p"]),
            interval_count=int(header["interval_count"]),
            interval_length=float(header["interval_length"]),
            averaged=bool(int(header["averaged"])),
            meta={"source_hash": header.get("source_hash", "")},
        )
    except KeyError as exc:
        raise ConfigError(f"data-matrix file {path} is missing field {exc}") from exc
