"""Recorded episode data and its on-disk CSV form."""

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridError

# All numeric output uses 17 significant digits: enough to round-trip an IEEE
# double exactly, so re-reading a file reproduces the run bit-for-bit.
FLOAT_FMT = "%.17g"


def format_float(x):
    return FLOAT_FMT % float(x)


@dataclass
class Trajectory:
    """One recorded episode on a uniform time grid.

    ``states`` and ``inputs`` hold x(t_i) and the applied input at each grid
    point.  ``disturbances`` (present only for runs recorded in "controlled
    environment" mode) holds the value held constant over the step starting
    at t_i; the final row repeats the last held value so every column has
    equal length.
    """

    dt: float
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    interval_length: float
    interval_count: int
    episode_seed: int
    disturbances: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if self.disturbances is not None:
            self.disturbances = np.atleast_2d(np.asarray(self.disturbances, dtype=float))
        rows = self.times.shape[0]
        for name, arr in (("states", self.states), ("inputs", self.inputs)):
            if arr.shape[0] != rows:
                raise GridError(f"{name} has {arr.shape[0]} rows for {rows} time points")
        if self.disturbances is not None and self.disturbances.shape[0] != rows:
            raise GridError("disturbances row count does not match the time grid")
        diffs = np.diff(self.times)
        if rows > 1 and not np.allclose(diffs, self.dt, rtol=0, atol=1e-12):
            raise GridError("time grid is not uniformly spaced at dt")
        steps_per_interval = self.interval_length / self.dt
        if abs(steps_per_interval - round(steps_per_interval)) > 1e-9:
            raise GridError(
                f"interval length {self.interval_length} is not an integer multiple of dt={self.dt}"
            )
        if (rows - 1) * self.dt + 1e-12 < self.interval_count * self.interval_length:
            raise GridError("trajectory shorter than interval_count * interval_length")

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def m(self):
        return self.inputs.shape[1]

    @property
    def p(self):
        return 0 if self.disturbances is None else self.disturbances.shape[1]

    @property
    def has_disturbance(self):
        return self.disturbances is not None

    @property
    def steps_per_interval(self):
        return int(round(self.interval_length / self.dt))

    # -- persistence --------------------------------------------------------

    def to_csv(self, path):
        """Write the episode as a self-describing CSV file."""
        buf = io.StringIO()
        h = {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "dt": format_float(self.dt),
            "interval_length": format_float(self.interval_length),
            "interval_count": self.interval_count,
            "episode_seed": self.episode_seed,
            "records_disturbance": int(self.has_disturbance),
        }
        for key, value in h.items():
            buf.write(f"# {key} = {value}\n")
        cols = ["time"]
        cols += [f"x{i}" for i in range(self.n)]
        cols += [f"u{i}" for i in range(self.m)]
        if self.has_disturbance:
            cols += [f"e{i}" for i in range(self.p)]
        buf.write(",".join(cols) + "\n")
        blocks = [self.times[:, None], self.states, self.inputs]
        if self.has_disturbance:
            blocks.append(self.disturbances)
        data = np.hstack(blocks)
        for row in data:
            buf.write(",".join(format_float(v) for v in row) + "\n")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, path):
        text = Path(path).read_text()
        header = {}
        lines = text.splitlines()
        i = 0
        while i < len(lines) and lines[i].startswith("#"):
            key, _, value = lines[i][1:].partition("=")
            header[key.strip()] = value.strip()
            i += 1
        try:
            n = int(header["n"])
            m = int(header["m"])
            p = int(header["p"])
            dt = float(header["dt"])
            interval_length = float(header["interval_length"])
            interval_count = int(header["interval_count"])
            episode_seed = int(header["episode_seed"])
            records_e = bool(int(header["records_disturbance"]))
        except KeyError as exc:
            raise ConfigError(f"trajectory file {path} is missing header field {exc}") from exc
        data = np.loadtxt(io.StringIO("\n".join(lines[i + 1 :])), delimiter=",", ndmin=2)
        expected_cols = 1 + n + m + (p if records_e else 0)
        if data.shape[1] != expected_cols:
            raise ConfigError(
                f"trajectory file {path} has {data.shape[1]} columns, expected {expected_cols}"
            )
        times = data[:, 0]
        states = data[:, 1 : 1 + n]
        inputs = data[:, 1 + n : 1 + n + m]
        dist = data[:, 1 + n + m :] if records_e else None
        return cls(
            dt=dt,
            times=times,
            states=states,
            inputs=inputs,
            disturbances=dist,
            interval_length=interval_length,
            interval_count=interval_count,
            episode_seed=episode_seed,
        )
