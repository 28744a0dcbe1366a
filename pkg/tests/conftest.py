"""Shared fixtures: the bundled three-state benchmark system and cheap batch factories.

Unit tests run on a shortened grid (20 intervals, 1 s) that still clears both
rank thresholds; the acceptance tests use the full bundled operating point.
"""

import importlib.resources

import numpy as np
import pytest

import lqrlearn as ll

# Seeds for multi-seed property tests.  Deliberately disjoint from the bundled
# master seed so fixtures never alias the reproduction artifacts.
UNIT_SEEDS = list(range(7100, 7108))

# Acceptance-criterion pass/fail lines, printed in the terminal summary by the
# hook below.  test_acceptance appends (label, passed, detail) triples.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_LINES:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict} {label}: {detail}")


@pytest.fixture(scope="session")
def repro():
    """The bundled reproduction configuration."""
    path = importlib.resources.files("lqrlearn") / "configs" / "reproduction.json"
    return ll.ExperimentConfig.from_json(str(path))


@pytest.fixture(scope="session")
def oracle(repro):
    """Model-based policy-iteration solution for the bundled system."""
    history, converged = ll.kleinman_iterate(repro.system, repro.cost)
    assert converged
    return {"P": history[-1].P, "K": history[-1].K, "history": history}


@pytest.fixture(scope="session")
def signal(repro):
    """The exploration input replayed from the bundled master seed."""
    return repro.exploration.draw(repro.episodes.master_seed, channels=1)


@pytest.fixture(scope="session")
def small_grid():
    """Short simulation grid for unit tests: 20 intervals of 0.05 s at dt=1e-3."""
    return {"duration": 1.0, "dt": 1e-3, "interval_length": 0.05, "interval_count": 20}


@pytest.fixture(scope="session")
def make_batch(repro, signal, small_grid):
    """Factory for episode batches on the bundled system over the short grid."""

    def _make(N, master_seed, sigma_scale=1.0, record_disturbance=False, x0=None,
              **overrides):
        grid = dict(small_grid)
        grid.update(overrides)
        sys = repro.system
        if sigma_scale != 1.0:
            sys = ll.LtiSystem(A=sys.A, B=sys.B, E=sys.E,
                               sigma=sigma_scale ** 2 * sys.sigma)
        return ll.generate_episodes(
            sys, signal, N, grid["duration"], grid["dt"], master_seed,
            x0=x0, record_disturbance=record_disturbance,
            interval_length=grid["interval_length"],
            interval_count=grid["interval_count"],
        )

    return _make


@pytest.fixture(scope="session")
def batch200(make_batch):
    """200 noisy episodes on the short grid, reused by the moment-level tests."""
    return make_batch(200, 7001)


def random_symmetric(rng, n, scale=1.0):
    m = rng.normal(size=(n, n)) * scale
    return (m + m.T) / 2.0


def random_stable(rng, n, margin=0.5):
    """Random matrix shifted until comfortably Hurwitz."""
    a = rng.normal(size=(n, n))
    shift = max(np.real(np.linalg.eigvals(a)).max(), 0.0) + margin
    return a - shift * np.eye(n)
