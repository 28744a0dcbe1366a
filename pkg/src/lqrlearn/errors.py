"""Typed exceptions shared across the package, each mapped to a CLI exit code."""


class LqrLearnError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LqrLearnError):
    """Invalid, inconsistent, or unparseable experiment configuration."""

    exit_code = 2


class ExcitationError(LqrLearnError):
    """Regression data is rank deficient: the exploration was not rich enough."""

    exit_code = 3

    def __init__(self, message, required_rank=None, achieved_rank=None, singular_values=None):
        super().__init__(message)
        self.required_rank = required_rank
        self.achieved_rank = achieved_rank
        self.singular_values = singular_values


class DivergenceError(LqrLearnError):
    """A simulated state trajectory exceeded the blow-up threshold."""

    exit_code = 4

    def __init__(self, message, last_valid_time=None, episode_index=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time
        self.episode_index = episode_index


class ConvergenceError(LqrLearnError):
    """An iteration hit its step limit without meeting the termination threshold."""

    exit_code = 5

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class StabilityError(LqrLearnError):
    """A matrix required to be Hurwitz is not."""


class SymmetryError(LqrLearnError):
    """A matrix required to be symmetric is not."""


class CovarianceError(LqrLearnError):
    """A noise covariance matrix is not positive semidefinite."""


class ModeError(LqrLearnError):
    """Data is missing a block the requested operation needs (e.g. recorded disturbance)."""

    exit_code = 2


class GridError(LqrLearnError):
    """Time grids are inconsistent (interval length not a step multiple, mismatched spacing)."""

    exit_code = 2


class EstimationError(LqrLearnError):
    """Not enough episodes to estimate the requested empirical moment."""
