"""Experiment configuration: JSON schema, validation, canonical form.

A config file is one JSON object with nested sections.  Parsing is strict:
unknown keys are rejected with their full dotted path, so typos fail loudly
instead of silently running defaults.  ``canonical_json`` defines the
normal form used for round-trip and determinism checks (sorted keys, fixed
separators, no trailing whitespace).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .learners import LearnerConfig
from .signals import ExplorationSignal
from .simulate import seed_stream, STREAM_SIGNAL
from .systems import CostWeights, LtiSystem

X0_MODES = ("origin", "draw")


# ---------------------------------------------------------------------------
# Section dataclasses
# ---------------------------------------------------------------------------


@dataclass
class ExplorationSpec:
    """How to draw the open-loop excitation: ``count`` sinusoids of fixed
    amplitude with frequencies uniform on ``frequency_range``."""

    count: int = 6
    amplitude: float = 1.0
    frequency_range: tuple = (-5.0, 5.0)

    def __post_init__(self):
        self.count = int(self.count)
        self.amplitude = float(self.amplitude)
        lo, hi = (float(v) for v in self.frequency_range)
        self.frequency_range = (lo, hi)
        if self.count < 1:
            raise ConfigError("exploration.count must be >= 1")
        if self.amplitude < 0:
            raise ConfigError("exploration.amplitude must be >= 0")
        if not hi > lo:
            raise ConfigError("exploration.frequency_range must satisfy lo < hi")

    def draw(self, master_seed, channels=1):
        return ExplorationSignal.draw(
            self.count, self.amplitude, self.frequency_range,
            seed_stream(master_seed, STREAM_SIGNAL), channels=channels,
        )


@dataclass
class SimulationGrid:
    dt: float = 1e-3
    interval_length: float = 0.05
    interval_count: int = 100
    duration: float = None
    x0: object = "draw"
    blowup_threshold: float = 1e8

    def __post_init__(self):
        self.dt = float(self.dt)
        self.interval_length = float(self.interval_length)
        self.interval_count = int(self.interval_count)
        if self.dt <= 0:
            raise ConfigError("simulation.dt must be positive")
        if self.interval_length <= 0 or self.interval_count < 1:
            raise ConfigError("simulation interval settings must be positive")
        if self.duration is None:
            self.duration = self.interval_length * self.interval_count
        self.duration = float(self.duration)
        if self.duration + 1e-12 < self.interval_length * self.interval_count:
            raise ConfigError(
                "simulation.duration shorter than interval_count * interval_length")
        if isinstance(self.x0, str):
            if self.x0 not in X0_MODES:
                raise ConfigError(
                    f"simulation.x0 must be one of {X0_MODES} or an explicit vector")
        else:
            self.x0 = np.asarray(self.x0, dtype=float).ravel()
        self.blowup_threshold = float(self.blowup_threshold)

    def start_state(self, n):
        """Explicit start state, or None when episodes should draw/assume one."""
        if isinstance(self.x0, str):
            if self.x0 == "origin":
                return np.zeros(n)
            return None  # "draw": per-master-seed uniform draw downstream
        if self.x0.size != n:
            raise ConfigError(f"simulation.x0 has size {self.x0.size}, expected {n}")
        return self.x0


@dataclass
class EpisodeSpec:
    count: int = 50
    master_seed: int = 0

    def __post_init__(self):
        self.count = int(self.count)
        self.master_seed = int(self.master_seed)
        if self.count < 1:
            raise ConfigError("episodes.count must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("episodes.master_seed must fit in 64 bits")


# ---------------------------------------------------------------------------
# Top-level config
# ---------------------------------------------------------------------------

_SCHEMA = {
    "system": {"A", "B", "E", "sigma"},
    "cost": {"Q", "R"},
    "exploration": {"count", "amplitude", "frequency_range"},
    "simulation": {"dt", "interval_length", "interval_count", "duration",
                   "x0", "blowup_threshold"},
    "learning": {"K0", "tol", "max_iter"},
    "episodes": {"count", "master_seed"},
    "output": {"directory"},
}


@dataclass
class ExperimentConfig:
    system: LtiSystem
    cost: CostWeights
    exploration: ExplorationSpec = field(default_factory=ExplorationSpec)
    simulation: SimulationGrid = field(default_factory=SimulationGrid)
    learning: LearnerConfig = field(default_factory=LearnerConfig)
    episodes: EpisodeSpec = field(default_factory=EpisodeSpec)
    output_dir: str = "runs"

    def __post_init__(self):
        n, m = self.system.n, self.system.m
        if self.cost.Q.shape != (n, n):
            raise ConfigError(f"cost.Q is {self.cost.Q.shape}, system needs ({n}, {n})")
        if self.cost.R.shape != (m, m):
            raise ConfigError(f"cost.R is {self.cost.R.shape}, system needs ({m}, {m})")
        if self.learning.K0 is not None and self.learning.K0.shape != (m, n):
            raise ConfigError(
                f"learning.K0 is {self.learning.K0.shape}, system needs ({m}, {n})")
        self.simulation.start_state(n)  # dimension check for explicit x0

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _check_sections(raw)
        sysd = _require(raw, "system")
        costd = _require(raw, "cost")
        try:
            system = LtiSystem(
                A=_mat(sysd, "system.A"), B=_mat(sysd, "system.B"),
                E=_mat(sysd, "system.E"), sigma=_mat(sysd, "system.sigma"),
            )
            cost = CostWeights(Q=_mat(costd, "cost.Q"), R=_mat(costd, "cost.R"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        expl = ExplorationSpec(**raw.get("exploration", {}))
        simd = dict(raw.get("simulation", {}))
        sim = SimulationGrid(**simd)
        learnd = dict(raw.get("learning", {}))
        if learnd.get("K0") is not None:
            learnd["K0"] = np.asarray(learnd["K0"], dtype=float)
        try:
            learning = LearnerConfig(**learnd)
        except ValueError as exc:
            raise ConfigError(f"learning: {exc}") from exc
        episodes = EpisodeSpec(**raw.get("episodes", {}))
        output_dir = raw.get("output", {}).get("directory", "runs")
        return cls(system=system, cost=cost, exploration=expl, simulation=sim,
                   learning=learning, episodes=episodes, output_dir=str(output_dir))

    @classmethod
    def from_json(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
        return cls.from_dict(raw)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        x0 = self.simulation.x0
        return {
            "system": {
                "A": self.system.A.tolist(), "B": self.system.B.tolist(),
                "E": self.system.E.tolist(), "sigma": self.system.sigma.tolist(),
            },
            "cost": {"Q": self.cost.Q.tolist(), "R": self.cost.R.tolist()},
            "exploration": {
                "count": self.exploration.count,
                "amplitude": self.exploration.amplitude,
                "frequency_range": list(self.exploration.frequency_range),
            },
            "simulation": {
                "dt": self.simulation.dt,
                "interval_length": self.simulation.interval_length,
                "interval_count": self.simulation.interval_count,
                "duration": self.simulation.duration,
                "x0": x0 if isinstance(x0, str) else np.asarray(x0).tolist(),
                "blowup_threshold": self.simulation.blowup_threshold,
            },
            "learning": {
                "K0": None if self.learning.K0 is None else self.learning.K0.tolist(),
                "tol": self.learning.tol,
                "max_iter": self.learning.max_iter,
            },
            "episodes": {
                "count": self.episodes.count,
                "master_seed": self.episodes.master_seed,
            },
            "output": {"directory": self.output_dir},
        }

    def canonical_json(self):
        return canonical_json(self.to_dict())


def canonical_json(obj):
    """Normal form for config and manifest files: sorted keys, 2-space indent."""
    return json.dumps(obj, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _check_sections(raw):
    for key in raw:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key: '{key}'")
        section = raw[key]
        if not isinstance(section, dict):
            raise ConfigError(f"config section '{key}' must be an object")
        for sub in section:
            if sub not in _SCHEMA[key]:
                raise ConfigError(f"unknown config key: '{key}.{sub}'")


def _require(raw, key):
    if key not in raw:
        raise ConfigError(f"missing required config section: '{key}'")
    return raw[key]


def _mat(section, path):
    key = path.split(".")[-1]
    if key not in section:
        raise ConfigError(f"missing required config key: '{path}'")
    try:
        return np.asarray(section[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{path}' is not a numeric array: {exc}") from exc
