"""Estimator-style wrappers around the offline learners.

These follow the scikit-learn contract: constructor stores parameters
verbatim, ``fit`` validates and learns, learned quantities get a trailing
underscore, ``predict`` maps states to feedback inputs.  They exist so the
learners drop into pipelines and grid searches; the functional API in
:mod:`lqrlearn.learners` remains the primary surface.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .datamatrices import DataMatrices, build_matrices
from .learners import LearnerConfig, learn_episodic, learn_exact, learn_naive_average
from .systems import CostWeights
from .trajectory import Trajectory


def _as_matrices(X, include_e):
    """Trajectories are converted on the fly; data matrices pass through."""
    if isinstance(X, Trajectory):
        return build_matrices(X, include_e=include_e and X.disturbances is not None)
    if isinstance(X, DataMatrices):
        return X
    return [_as_matrices(item, include_e) for item in X]


class _BaseLqr(BaseEstimator):
    """Shared plumbing: parameter bundling, fitted attributes, predict."""

    def __init__(self, Q=None, R=None, K0=None, tol=1e-6, max_iter=50):
        self.Q = Q
        self.R = R
        self.K0 = K0
        self.tol = tol
        self.max_iter = max_iter

    def _weights(self):
        if self.Q is None or self.R is None:
            raise ValueError("Q and R must be set before fitting")
        return CostWeights(Q=np.asarray(self.Q, dtype=float),
                           R=np.asarray(self.R, dtype=float))

    def _config(self):
        return LearnerConfig(K0=self.K0, tol=self.tol, max_iter=self.max_iter)

    def _absorb(self, history, converged):
        final = history[-1]
        self.history_ = history
        self.converged_ = converged
        self.gain_ = final.K
        self.cost_matrix_ = final.P
        self.n_iter_ = len(history)
        coupling = final.extra.get("disturbance_coupling")
        if coupling is not None:
            self.disturbance_coupling_ = coupling
        return self

    def predict(self, X):
        """Feedback inputs ``u = -K x`` for an array of states (n_samples, n)."""
        check_is_fitted(self, "gain_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.gain_.shape[1]:
            raise ValueError(
                f"states have dimension {X.shape[1]}, gain expects {self.gain_.shape[1]}")
        return -X @ self.gain_.T


class ExactOneShotLqr(_BaseLqr):
    """One-shot learner for batches with a recorded disturbance signal.

    ``fit(X)`` accepts a single trajectory (or data-matrix bundle) whose
    disturbance history was logged alongside the state.  Exposes
    ``disturbance_coupling_`` in addition to the usual fitted attributes.
    """

    def fit(self, X, y=None):
        history, converged = learn_exact(_as_matrices(X, include_e=True),
                                         self._weights(), self._config())
        return self._absorb(history, converged)


class EpisodicLqr(_BaseLqr):
    """Sample-average learner over repeated episodes (disturbance unmeasured).

    ``fit(X)`` accepts a list of per-episode trajectories (or data-matrix
    bundles), or a pre-averaged bundle.
    """

    def fit(self, X, y=None):
        history, converged = learn_episodic(_as_matrices(X, include_e=False),
                                            self._weights(), self._config())
        return self._absorb(history, converged)


class NaiveAveragedLqr(EpisodicLqr):
    """Deliberately wrong control: average trajectories pointwise, then learn.

    Averaging states before forming quadratic data drops the disturbance
    covariance contribution, so this estimator converges to a biased gain.
    It exists to quantify that failure mode against :class:`EpisodicLqr`.
    """

    def fit(self, X, y=None):
        history, converged = learn_naive_average(X, self._weights(), self._config())
        return self._absorb(history, converged)
