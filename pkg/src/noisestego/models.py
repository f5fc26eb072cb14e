"""Analytic data predictors and a synthetic latent codec.

The predictors implement the posterior mean E[x0 | x_t] in closed form
for priors where it is exact (diagonal Gaussian, isotropic Gaussian
mixture), standing in for a trained network so that solver accuracy can
be measured against ground truth.  The latent codec pairs an expansive
decoder having a mild tanh nonlinearity with a linear encoder that
inverts only the linear part, reproducing the situation where encoding a
decoded signal does not return the original latent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .rng import gaussian, philox
from .schedule import NoiseSchedule


class DataPredictor(Protocol):
    """Clean-data prediction x0_hat(x_t, t); deterministic and finite."""

    def predict(self, x_t: np.ndarray, t: float, schedule: NoiseSchedule) -> np.ndarray:
        ...


class ZeroPredictor:
    """Predicts zero everywhere; makes every solver step exactly linear."""

    def predict(self, x_t, t, schedule):
        return np.zeros_like(x_t)


@dataclass(frozen=True)
class GaussianOracle:
    """Exact posterior mean under a diagonal Gaussian data prior.

    With prior N(mean, diag(variance)) and x_t = alpha*x0 + sigma*eps,

        predict(x_t, t) = mean + (alpha*v / (alpha^2*v + sigma^2)) * (x_t - alpha*mean).
    """

    mean: np.ndarray
    variance: np.ndarray

    def predict(self, x_t, t, schedule):
        a = schedule.alpha(t)
        s2 = schedule.sigma(t) ** 2
        gain = a * self.variance / (a * a * self.variance + s2)
        return self.mean + gain * (x_t - a * self.mean)

    def transport(self, x_from, t_from, t_to, schedule):
        """Exact flow-map of the probability-flow ODE for this prior.

        Quantiles are preserved:  x(t) = alpha_t*mean + (sd_t/sd_s) * (x(s) - alpha_s*mean)
        with sd_t = sqrt(alpha_t^2 * v + sigma_t^2).  Used as an
        independent reference for solver tests.
        """
        a_from, a_to = schedule.alpha(t_from), schedule.alpha(t_to)
        sd_from = np.sqrt(a_from ** 2 * self.variance + schedule.sigma(t_from) ** 2)
        sd_to = np.sqrt(a_to ** 2 * self.variance + schedule.sigma(t_to) ** 2)
        return a_to * self.mean + (sd_to / sd_from) * (x_from - a_from * self.mean)


def gaussian_oracle(mean, variance, shape) -> GaussianOracle:
    """Broadcast scalar or array mean/variance to the latent shape."""
    mean_arr = np.broadcast_to(np.asarray(mean, dtype=float), shape).copy()
    var_arr = np.broadcast_to(np.asarray(variance, dtype=float), shape).copy()
    if (var_arr <= 0).any():
        raise ValueError("variance entries must be positive")
    return GaussianOracle(mean_arr, var_arr)


@dataclass(frozen=True)
class MixtureOracle:
    """Posterior mean under an isotropic Gaussian mixture prior.

    Components share unit variance;  weights w_k and mean tensors mu_k are
    free.  Responsibilities come from the exact marginals
    N(alpha*mu_k, (alpha^2 + sigma^2) I) with log-sum-exp stabilization,
    and the prediction is the responsibility-weighted per-component
    posterior mean.  The mixture makes the flow genuinely nonlinear.
    """

    weights: np.ndarray
    means: np.ndarray  # (K, F, T)

    def __post_init__(self):
        if self.means.ndim != 3:
            raise ValueError("means must be a (K, F, T) stack")
        if self.weights.shape != (self.means.shape[0],):
            raise ValueError("weights must match the component count")

    def responsibilities(self, x_t, t, schedule):
        a = schedule.alpha(t)
        var = a * a + schedule.sigma(t) ** 2
        diffs = x_t[None, :, :] - a * self.means
        logits = np.log(self.weights) - np.sum(diffs * diffs, axis=(1, 2)) / (2.0 * var)
        logits -= logits.max()
        probs = np.exp(logits)
        return probs / probs.sum()

    def predict(self, x_t, t, schedule):
        a = schedule.alpha(t)
        var = a * a + schedule.sigma(t) ** 2
        gamma = self.responsibilities(x_t, t, schedule)
        mean_bar = np.tensordot(gamma, self.means, axes=(0, 0))
        # Per-component posterior means share the gain a*1/(a^2*1 + sigma^2),
        # so the mixture prediction collapses to the same affine form around
        # the responsibility-weighted mean.
        gain = a / var
        return mean_bar + gain * (x_t - a * mean_bar)


def mixture_oracle(seed: int, components: int, radius: float, shape) -> MixtureOracle:
    """Equal-weight mixture with seeded mean tensors of Frobenius norm radius."""
    if components < 1:
        raise ValueError("mixture needs at least one component")
    f, t = shape
    gen = philox(seed)
    means = gaussian(gen, components * f * t).reshape(components, f, t)
    norms = np.sqrt(np.sum(means * means, axis=(1, 2), keepdims=True))
    means = radius * means / norms
    weights = np.full(components, 1.0 / components)
    return MixtureOracle(weights, means)


@dataclass(frozen=True)
class LatentCodec:
    """Expansive decoder / lossy linear encoder pair.

    decode(z) = W v + eps * tanh(W v) with v = vec(z) and W an L x (F*T)
    matrix with orthonormal columns; encode(x) = reshape(W^T x) inverts
    the linear part only, so encode(decode(z)) != z whenever eps > 0.
    """

    weights: np.ndarray  # (L, F*T), orthonormal columns
    latent_shape: tuple
    nonlinearity: float

    @property
    def signal_length(self) -> int:
        return self.weights.shape[0]

    def decode(self, z: np.ndarray) -> np.ndarray:
        v = np.asarray(z, dtype=float).reshape(-1)
        if v.size != self.weights.shape[1]:
            raise ValueError(f"latent has {v.size} entries, codec expects {self.weights.shape[1]}")
        lin = self.weights @ v
        return lin + self.nonlinearity * np.tanh(lin)

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.signal_length,):
            raise ValueError(f"signal must have length {self.signal_length}, got {x.shape}")
        return (self.weights.T @ x).reshape(self.latent_shape)

    def decode_grad(self, z: np.ndarray, residual: np.ndarray) -> np.ndarray:
        """Gradient of ||x - decode(z)||^2 w.r.t. z, given residual = x - decode(z).

        The decoder Jacobian is (I + eps * diag(1 - tanh^2(W v))) W, so the
        gradient is -2 W^T [(1 + eps*(1 - u^2)) * residual] with u = tanh(W v).
        """
        residual = np.asarray(residual, dtype=float)
        if residual.shape != (self.signal_length,):
            raise ValueError(f"residual must have length {self.signal_length}, got {residual.shape}")
        lin = self.weights @ np.asarray(z, dtype=float).reshape(-1)
        u = np.tanh(lin)
        weighted = (1.0 + self.nonlinearity * (1.0 - u * u)) * residual
        return (-2.0 * (self.weights.T @ weighted)).reshape(self.latent_shape)


def build_codec(seed: int, latent_shape, expansion: int = 4, nonlinearity: float = 0.1) -> LatentCodec:
    """Codec with a seeded orthonormal-column decoder matrix, L = expansion * F * T."""
    f, t = latent_shape
    dim = f * t
    length = expansion * dim
    if length < dim:
        raise ValueError("signal length must be at least the latent dimension")
    if nonlinearity < 0:
        raise ValueError("nonlinearity gain must be >= 0")
    raw = gaussian(philox(seed), length * dim).reshape(length, dim)
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))
    return LatentCodec(q, (f, t), float(nonlinearity))
