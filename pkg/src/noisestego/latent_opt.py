"""Gradient refinement of the encoder's latent estimate.

Starting from encode(x), plain gradient descent on the decoder
reconstruction loss ||x - decode(z)||^2 walks the latent toward the one
that actually produced the signal, undoing most of the encoder's
linear-part-only approximation before inversion runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .models import LatentCodec


@dataclass(frozen=True)
class OptimizerConfig:
    """Fixed-step gradient descent controls.

    The default step size 0.1 sits under the stability bound
    1 / (2 * (1 + nonlinearity)^2) implied by the decoder's Lipschitz
    constants, so the recorded loss sequence is non-increasing.
    """

    iterations: int = 100
    step_size: float = 0.1
    loss_threshold: float = 1e-10

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations!r}")
        if self.step_size <= 0:
            raise ConfigurationError(f"step_size must be positive, got {self.step_size!r}")
        if self.loss_threshold < 0:
            raise ConfigurationError(f"loss_threshold must be >= 0, got {self.loss_threshold!r}")


@dataclass
class OptimizationResult:
    latent: np.ndarray
    losses: np.ndarray  # loss before each update, plus the final loss


def optimize_latent(x: np.ndarray, codec: LatentCodec,
                    config: OptimizerConfig = OptimizerConfig()) -> OptimizationResult:
    """Minimize ||x - decode(z)||^2 from z = encode(x) by gradient descent.

    Runs config.iterations updates z <- z - step_size * grad, stopping
    early once the loss falls below loss_threshold (so an exactly
    invertible codec returns encode(x) unchanged).  A non-finite loss
    raises DivergenceError suggesting a smaller step size.
    """
    x = np.asarray(x, dtype=float)
    z = codec.encode(x)
    losses = []
    for _ in range(config.iterations):
        residual = x - codec.decode(z)
        loss = float(residual @ residual)
        if not np.isfinite(loss):
            raise DivergenceError(
                "latent optimization diverged (non-finite loss); try a smaller step_size")
        losses.append(loss)
        if loss < config.loss_threshold:
            break
        z = z - config.step_size * codec.decode_grad(z, residual)
    residual = x - codec.decode(z)
    final_loss = float(residual @ residual)
    if not np.isfinite(final_loss):
        raise DivergenceError(
            "latent optimization diverged (non-finite loss); try a smaller step_size")
    losses.append(final_loss)
    return OptimizationResult(z, np.array(losses))
