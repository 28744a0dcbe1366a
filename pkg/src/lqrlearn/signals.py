"""Sum-of-sinusoids exploration input."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class ExplorationSignal:
    """Persistently exciting probe input: per channel, a sum of sinusoids.

    Channel c evaluates to ``sum_i amplitudes[i] * sin(frequencies[i] * t
    + channel_offsets[c])``.  Frequencies and amplitudes are stored
    explicitly (never an RNG handle) so that any run can be replayed from
    its recorded configuration alone.
    """

    amplitudes: np.ndarray
    frequencies: np.ndarray
    channel_offsets: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        self.frequencies = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        self.channel_offsets = np.atleast_1d(np.asarray(self.channel_offsets, dtype=float))
        if self.amplitudes.shape != self.frequencies.shape:
            raise ConfigError(
                f"amplitudes and frequencies must match: "
                f"{self.amplitudes.shape} vs {self.frequencies.shape}"
            )
        if not (np.all(np.isfinite(self.amplitudes)) and np.all(np.isfinite(self.frequencies))):
            raise ConfigError("exploration signal parameters must be finite")

    @property
    def count(self):
        """Number of sinusoidal terms per channel."""
        return self.amplitudes.shape[0]

    @property
    def channels(self):
        return self.channel_offsets.shape[0]

    @property
    def bound(self):
        """Hard amplitude bound: |u_c(t)| <= sum |a_i| for every t."""
        return float(np.sum(np.abs(self.amplitudes)))

    @classmethod
    def draw(cls, count, amplitude, freq_range, rng, channels=1):
        """Draw ``count`` frequencies uniformly from ``freq_range`` with a shared amplitude."""
        lo, hi = float(freq_range[0]), float(freq_range[1])
        if hi < lo:
            raise ConfigError(f"frequency range is reversed: [{lo}, {hi}]")
        freqs = rng.uniform(lo, hi, size=count)
        return cls(
            amplitudes=np.full(count, float(amplitude)),
            frequencies=freqs,
            channel_offsets=np.zeros(channels),
        )


def exploration_value(sig: ExplorationSignal, t):
    """Evaluate the signal at time(s) ``t``.

    Scalar ``t`` gives a (channels,) vector; an array of shape (k,) gives
    (k, channels).
    """
    t_arr = np.asarray(t, dtype=float)
    phases = np.multiply.outer(t_arr, sig.frequencies)  # (..., count)
    per_channel = np.sin(phases[..., None] + sig.channel_offsets)  # (..., count, channels)
    return np.einsum("...ic,i->...c", per_channel, sig.amplitudes)
