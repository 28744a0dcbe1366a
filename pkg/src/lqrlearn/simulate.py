"""Trajectory generation: batched RK4 integration of the disturbed plant.

The disturbance is sampled once per integrator step and held constant across
the step (band-limited white noise).  That choice keeps classical RK4 valid
— the right-hand side is smooth within each step — and makes "recorded
disturbance" well defined: the held value is exactly what lands in the
trajectory file.

All episode batches run through one vectorized core, so a single episode is
just a batch of size one and determinism never depends on the batch shape.
"""

import numpy as np

from .errors import CovarianceError, DivergenceError
from .signals import ExplorationSignal, exploration_value
from .systems import LtiSystem
from .trajectory import Trajectory

BLOWUP_THRESHOLD = 1e8

# Seed-stream layout under one master seed: stream 0 draws the exploration
# frequencies, stream 1 draws x0, stream 2+i drives episode i's noise.
STREAM_SIGNAL = 0
STREAM_X0 = 1
STREAM_EPISODE_BASE = 2


def seed_stream(master_seed, index):
    """Independent, reproducible RNG stream ``index`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def stream_id(master_seed, index):
    """Stable integer identifier for a seed stream (informational, for file headers)."""
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1)[0])


def covariance_factor(sigma):
    """Factor L with L L' = sigma; Cholesky when possible, eigen fallback for PSD."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sigma = 0.5 * (sigma + sigma.T)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(sigma)
        if np.min(w) < -1e-12 * max(1.0, np.max(np.abs(w))):
            raise CovarianceError("noise covariance is indefinite")
        return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def sample_noise(sigma, rng):
    """One zero-mean Gaussian draw with covariance ``sigma``."""
    factor = covariance_factor(sigma)
    return factor @ rng.standard_normal(factor.shape[0])


def _draw_step_noise(sigma, rng, steps):
    """(steps, p) matrix of held-per-step disturbance values."""
    factor = covariance_factor(sigma)
    return rng.standard_normal((steps, factor.shape[0])) @ factor.T


def _columns_matmul(M, x):
    """M @ x for x of shape (j, batch), accumulated in a fixed column order.

    BLAS picks different kernels (and summation orders) for different batch
    widths, so ``M @ x`` on one column can differ in the last bits from the
    same column inside a wider batch.  Accumulating explicitly over M's
    columns keeps every element's operation sequence independent of the
    batch width, which is what makes "a single episode is a batch of one"
    literally true.
    """
    out = M[:, 0][:, None] * x[0][None, :]
    for j in range(1, x.shape[0]):
        out = out + M[:, j][:, None] * x[j][None, :]
    return out


def _integrate_batch(sys: LtiSystem, u0_half, x0, noise, dt, feedback=None,
                     blowup=BLOWUP_THRESHOLD):
    """RK4-integrate all episodes of a batch simultaneously.

    Parameters
    ----------
    u0_half : (2*steps+1, m) exploration input sampled on the half-step grid
        (RK4's mid-stage evaluations fall on half steps).
    x0 : (n,) shared initial state.
    noise : (steps, p, N) per-step held disturbance values.
    feedback : optional (m, n) gain; when given the plant runs closed loop
        ``u = -Kx + u0`` (stage states use stage feedback).

    Returns
    -------
    (steps+1, n, N) state array.
    """
    steps, _, batch = noise.shape
    n = sys.n
    A, B, E = sys.A, sys.B, sys.E
    Acl = A if feedback is None else A - B @ feedback
    X = np.empty((steps + 1, n, batch))
    X[0] = np.asarray(x0, dtype=float)[:, None]
    x = X[0].copy()
    for k in range(steps):
        e_term = (_columns_matmul(E, noise[k].reshape(-1, batch))
                  if noise.shape[1] else np.zeros((n, batch)))
        u_a = B @ u0_half[2 * k][:, None] + e_term
        u_b = B @ u0_half[2 * k + 1][:, None] + e_term
        u_c = B @ u0_half[2 * k + 2][:, None] + e_term
        k1 = _columns_matmul(Acl, x) + u_a
        k2 = _columns_matmul(Acl, x + 0.5 * dt * k1) + u_b
        k3 = _columns_matmul(Acl, x + 0.5 * dt * k2) + u_b
        k4 = _columns_matmul(Acl, x + dt * k3) + u_c
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        norms = np.linalg.norm(x, axis=0)
        if np.max(norms) > blowup:
            bad = int(np.argmax(norms > blowup))
            raise DivergenceError(
                f"state norm {norms[bad]:.3e} exceeded blow-up threshold {blowup:.1e} "
                f"at t={(k + 1) * dt:.6g} in episode {bad}",
                last_valid_time=k * dt,
                episode_index=bad,
            )
        X[k + 1] = x
    return X


def _half_grid_input(sig, steps, dt):
    t_half = np.arange(2 * steps + 1) * (dt / 2.0)
    values = exploration_value(sig, t_half)
    return np.atleast_2d(values.reshape(t_half.shape[0], -1))


def simulate(sys: LtiSystem, sig: ExplorationSignal, duration, dt, seed,
             feedback=None, record_disturbance=False, x0=None,
             interval_length=None, interval_count=None,
             blowup=BLOWUP_THRESHOLD):
    """Integrate one episode and record it as a :class:`Trajectory`.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``; it drives only
    the noise draws.  ``x0`` defaults to the origin.  ``interval_length`` /
    ``interval_count`` tag the trajectory for later data-matrix extraction
    and default to one interval covering the whole run.
    """
    if dt <= 0 or duration < dt:
        raise ValueError("need dt > 0 and duration >= dt")
    steps = int(round(duration / dt))
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(seq)
    noise = _draw_step_noise(sys.sigma, rng, steps)
    u0_half = _half_grid_input(sig, steps, dt)
    X = _integrate_batch(sys, u0_half, x0, noise[:, :, None], dt,
                         feedback=feedback, blowup=blowup)
    if interval_length is None:
        interval_length = steps * dt
        interval_count = 1
    return _pack_trajectory(X[:, :, 0], u0_half, noise, dt, feedback,
                            record_disturbance, interval_length, interval_count,
                            episode_seed=int(seq.generate_state(1)[0]))


def _pack_trajectory(states, u0_half, noise, dt, feedback, record_disturbance,
                     interval_length, interval_count, episode_seed, meta=None):
    steps = states.shape[0] - 1
    times = np.arange(steps + 1) * dt
    u0_grid = u0_half[::2]
    if feedback is None:
        inputs = u0_grid
    else:
        inputs = u0_grid - states @ np.atleast_2d(feedback).T
    dist = None
    if record_disturbance:
        dist = np.vstack([noise, noise[-1:]]) if steps else noise
    return Trajectory(
        dt=dt,
        times=times,
        states=states,
        inputs=inputs,
        disturbances=dist,
        interval_length=interval_length,
        interval_count=interval_count,
        episode_seed=episode_seed,
        meta=meta or {},
    )


def simulate_episode(sys: LtiSystem, sig: ExplorationSignal, index, duration, dt,
                     master_seed, x0=None, record_disturbance=False,
                     interval_length=None, interval_count=None,
                     blowup=BLOWUP_THRESHOLD):
    """Reproduce episode ``index`` of a :func:`generate_episodes` batch.

    Bit-identical to the batched result: the deterministic part is shared
    and noise streams are independent per episode, so integrating one
    column alone changes nothing.  Lets callers attribute divergence to a
    single episode instead of losing the whole batch.
    """
    if index < 0:
        raise ValueError("episode index must be nonnegative")
    if dt <= 0 or duration < dt:
        raise ValueError("need dt > 0 and duration >= dt")
    steps = int(round(duration / dt))
    if x0 is None:
        x0 = seed_stream(master_seed, STREAM_X0).uniform(-1.0, 1.0, sys.n)
    else:
        x0 = np.asarray(x0, dtype=float)
    rng = seed_stream(master_seed, STREAM_EPISODE_BASE + index)
    noise = _draw_step_noise(sys.sigma, rng, steps)
    u0_half = _half_grid_input(sig, steps, dt)
    try:
        X = _integrate_batch(sys, u0_half, x0, noise[:, :, None], dt, blowup=blowup)
    except DivergenceError as exc:
        exc.episode_index = index
        raise
    if interval_length is None:
        interval_length = steps * dt
        interval_count = 1
    return _pack_trajectory(
        X[:, :, 0], u0_half, noise, dt, None, record_disturbance,
        interval_length, interval_count,
        episode_seed=stream_id(master_seed, STREAM_EPISODE_BASE + index),
        meta={"episode_index": index, "master_seed": master_seed},
    )


def generate_episodes(sys: LtiSystem, sig: ExplorationSignal, N, duration, dt,
                      master_seed, x0=None, record_disturbance=False,
                      interval_length=None, interval_count=None,
                      blowup=BLOWUP_THRESHOLD):
    """Simulate N episodes sharing x0 and the exploration input; only noise varies.

    Sharing the deterministic part across episodes is what lets sample
    averages of the data matrices estimate per-time-point moments.  Each
    episode's noise comes from an independent stream derived from
    ``master_seed``; ``x0=None`` draws it once from U(-1, 1)^n under the
    master seed and reuses it for every episode.
    """
    if N < 1:
        raise ValueError("need at least one episode")
    if dt <= 0 or duration < dt:
        raise ValueError("need dt > 0 and duration >= dt")
    steps = int(round(duration / dt))
    if x0 is None:
        x0 = seed_stream(master_seed, STREAM_X0).uniform(-1.0, 1.0, sys.n)
    else:
        x0 = np.asarray(x0, dtype=float)
    u0_half = _half_grid_input(sig, steps, dt)
    noise = np.empty((steps, sys.p, N))
    for i in range(N):
        rng = seed_stream(master_seed, STREAM_EPISODE_BASE + i)
        noise[:, :, i] = _draw_step_noise(sys.sigma, rng, steps)
    X = _integrate_batch(sys, u0_half, x0, noise, dt, blowup=blowup)
    if interval_length is None:
        interval_length = steps * dt
        interval_count = 1
    episodes = []
    for i in range(N):
        episodes.append(
            _pack_trajectory(
                X[:, :, i], u0_half, noise[:, :, i], dt, None,
                record_disturbance, interval_length, interval_count,
                episode_seed=stream_id(master_seed, STREAM_EPISODE_BASE + i),
                meta={"episode_index": i, "master_seed": master_seed},
            )
        )
    return episodes
