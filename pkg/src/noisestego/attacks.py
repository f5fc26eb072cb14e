"""Channel perturbations applied to the decoded signal.

Synthetic stand-ins for lossy transmission: additive Gaussian noise,
uniform re-quantization, a hard DFT low-pass (high-frequency loss), and
amplitude clipping.  Each attack is deterministic given its parameters
and seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .rng import gaussian, philox

ATTACK_KINDS = ("none", "additive_noise", "quantize", "lowpass", "amplitude_clip")


@dataclass(frozen=True)
class AttackSpec:
    """One channel perturbation.

    kind            parameters
    ----            ----------
    none            -
    additive_noise  sigma > 0, seed
    quantize        bits >= 1 (uniform grid over [-max|x|, max|x|])
    lowpass         rho in [0, 1], fraction of top DFT bins zeroed
    amplitude_clip  ratio in (0, 1], clamp to +/- ratio * max|x|
    """

    kind: str
    sigma: float = 0.0
    bits: int = 16
    rho: float = 0.0
    ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(f"unknown attack kind {self.kind!r}; expected one of {ATTACK_KINDS}")
        if self.kind == "additive_noise" and self.sigma <= 0:
            raise ConfigurationError(f"additive_noise needs sigma > 0, got {self.sigma!r}")
        if self.kind == "quantize" and self.bits < 1:
            raise ConfigurationError(f"quantize needs bits >= 1, got {self.bits!r}")
        if self.kind == "lowpass" and not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"lowpass needs rho in [0, 1], got {self.rho!r}")
        if self.kind == "amplitude_clip" and not 0.0 < self.ratio <= 1.0:
            raise ConfigurationError(f"amplitude_clip needs ratio in (0, 1], got {self.ratio!r}")

    def label(self) -> str:
        if self.kind == "additive_noise":
            return f"additive_noise(sigma={self.sigma:g})"
        if self.kind == "quantize":
            return f"quantize(bits={self.bits})"
        if self.kind == "lowpass":
            return f"lowpass(rho={self.rho:g})"
        if self.kind == "amplitude_clip":
            return f"amplitude_clip(ratio={self.ratio:g})"
        return "none"


def apply_attack(x: np.ndarray, spec: AttackSpec) -> np.ndarray:
    """Apply one attack to a 1-D signal; 'none' returns it unchanged."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"attacks operate on 1-D signals, got shape {x.shape}")
    if spec.kind == "none":
        return x.copy()
    if spec.kind == "additive_noise":
        return x + spec.sigma * gaussian(philox(spec.seed), x.size)
    if spec.kind == "quantize":
        amp = np.max(np.abs(x))
        if amp == 0.0:
            return x.copy()
        step = amp / 2 ** (spec.bits - 1)
        return np.round(x / step) * step
    if spec.kind == "lowpass":
        spectrum = np.fft.rfft(x)
        keep = int(np.ceil((1.0 - spec.rho) * spectrum.size))
        spectrum[keep:] = 0.0
        return np.fft.irfft(spectrum, n=x.size)
    if spec.kind == "amplitude_clip":
        bound = spec.ratio * np.max(np.abs(x))
        return np.clip(x, -bound, bound)
    raise ConfigurationError(f"unknown attack kind {spec.kind!r}")
