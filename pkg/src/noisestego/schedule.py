"""Variance-preserving cosine noise schedule.

Time runs on an ascending grid t_0 < t_1 < ... < t_N inside (0, 1], with
t_0 the data end and t_N the noise end.  Signal and noise rates are

    alpha(t) = cos(pi * t / 2),   sigma(t) = sin(pi * t / 2),

so alpha^2 + sigma^2 = 1 exactly and the log signal-to-noise ratio
log_snr(t) = log(alpha/sigma) is strictly decreasing in t.  Step
quantities follow the ascending-index convention

    h_i = log_snr(t_i) - log_snr(t_{i-1})   (negative),
    r_i = h_{i-1} / h_i,

and every solver coefficient in this package is derived from that single
definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DEFAULT_T_MIN = 1e-3
DEFAULT_T_MAX = 1.0 - 1e-3


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable time discretization plus the VP-cosine rate functions."""

    timesteps: np.ndarray
    log_snrs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ts = np.asarray(self.timesteps, dtype=float)
        object.__setattr__(self, "timesteps", ts)
        object.__setattr__(self, "log_snrs", self.log_snr(ts))

    @property
    def num_steps(self) -> int:
        return len(self.timesteps) - 1

    def alpha(self, t):
        return np.cos(0.5 * np.pi * np.asarray(t, dtype=float))

    def sigma(self, t):
        return np.sin(0.5 * np.pi * np.asarray(t, dtype=float))

    def log_snr(self, t):
        return np.log(self.alpha(t)) - np.log(self.sigma(t))

    def time_at(self, index) -> float:
        """Time at a (possibly fractional) grid index, linear in t."""
        return float(np.interp(index, np.arange(len(self.timesteps)), self.timesteps))


def build_schedule(num_steps: int,
                   t_min: float = DEFAULT_T_MIN,
                   t_max: float = DEFAULT_T_MAX) -> NoiseSchedule:
    """Uniform grid of num_steps+1 timesteps on [t_min, t_max].

    Raises ConfigurationError when num_steps < 2 or the time range is not
    0 < t_min < t_max <= 1.
    """
    if not isinstance(num_steps, (int, np.integer)) or num_steps < 2:
        raise ConfigurationError(f"num_steps must be an integer >= 2, got {num_steps!r}")
    if not 0.0 < t_min < 1.0:
        raise ConfigurationError(f"t_min must lie in (0, 1), got {t_min!r}")
    if not t_min < t_max <= 1.0:
        raise ConfigurationError(f"t_max must lie in (t_min, 1], got {t_max!r}")
    return NoiseSchedule(np.linspace(t_min, t_max, num_steps + 1))


def log_snr_step(schedule: NoiseSchedule, i: int, *, with_ratio: bool = True):
    """Return (h_i, r_i) for step index i in 1..N.

    h_i = log_snr(t_i) - log_snr(t_{i-1}).  The ratio r_i = h_{i-1}/h_i
    needs i >= 2; requesting it at i = 1 is an IndexError.  Pass
    with_ratio=False to get (h_1, None) at the first step.
    """
    n = schedule.num_steps
    if not 1 <= i <= n:
        raise IndexError(f"step index must be in 1..{n}, got {i}")
    lam = schedule.log_snrs
    h_i = float(lam[i] - lam[i - 1])
    if not with_ratio:
        return h_i, None
    if i < 2:
        raise IndexError("ratio h_{i-1}/h_i is undefined at i=1 (no previous step)")
    h_prev = float(lam[i - 1] - lam[i - 2])
    return h_i, h_prev / h_i
