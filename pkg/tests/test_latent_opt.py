import numpy as np
import pytest

from noisestego.errors import ConfigurationError, DivergenceError
from noisestego.latent_opt import OptimizerConfig, optimize_latent
from noisestego.models import build_codec
from noisestego.rng import philox, seeded_gaussian

SHAPE = (8, 8)


def test_invertible_codec_returns_encoder_output_unchanged():
    codec = build_codec(5, SHAPE, expansion=4, nonlinearity=0.0)
    x = codec.decode(seeded_gaussian(1, 64).reshape(SHAPE))
    result = optimize_latent(x, codec, OptimizerConfig())
    assert result.losses[0] < 1e-10
    assert np.array_equal(result.latent, codec.encode(x))


def test_planted_latent_recovery():
    codec = build_codec(5, SHAPE, expansion=4, nonlinearity=0.1)
    z_true = seeded_gaussian(2, 64).reshape(SHAPE)
    x = codec.decode(z_true)
    result = optimize_latent(x, codec, OptimizerConfig(iterations=200, step_size=0.1))
    err_init = np.linalg.norm(codec.encode(x) - z_true)
    err_final = np.linalg.norm(result.latent - z_true)
    assert err_final < err_init / 10.0


def test_single_update_matches_finite_difference_gradient():
    codec = build_codec(7, (4, 4), expansion=4, nonlinearity=0.1)
    gen = philox(3)
    x = codec.decode(gen.standard_normal((4, 4))) + 0.05 * gen.standard_normal(codec.signal_length)
    h = 0.1
    result = optimize_latent(x, codec, OptimizerConfig(iterations=1, step_size=h,
                                                       loss_threshold=0.0))
    z0 = codec.encode(x)
    step = 1e-5
    fd_grad = np.zeros_like(z0)
    loss = lambda z: float(np.sum((x - codec.decode(z)) ** 2))
    for i in range(4):
        for j in range(4):
            zp, zm = z0.copy(), z0.copy()
            zp[i, j] += step
            zm[i, j] -= step
            fd_grad[i, j] = (loss(zp) - loss(zm)) / (2 * step)
    expected = z0 - h * fd_grad
    assert np.max(np.abs(result.latent - expected)) <= 1e-5 * np.max(np.abs(h * fd_grad))


@pytest.mark.parametrize("eps", [0.0, 0.05, 0.2])
def test_loss_monotone_below_stability_bound(eps):
    codec = build_codec(9, SHAPE, expansion=4, nonlinearity=eps)
    gen = philox(4)
    x = codec.decode(gen.standard_normal(SHAPE)) + 0.2 * gen.standard_normal(codec.signal_length)
    step = 1.0 / (2.0 * (1.0 + eps) ** 2)
    result = optimize_latent(x, codec, OptimizerConfig(iterations=50, step_size=step,
                                                       loss_threshold=0.0))
    assert np.all(np.diff(result.losses) <= 1e-12)


def test_loss_curve_length():
    codec = build_codec(5, SHAPE, nonlinearity=0.1)
    x = codec.decode(seeded_gaussian(5, 64).reshape(SHAPE))
    result = optimize_latent(x, codec, OptimizerConfig(iterations=25, loss_threshold=0.0))
    assert len(result.losses) == 26


def test_oversized_step_raises_divergence_error():
    codec = build_codec(5, SHAPE, nonlinearity=0.1)
    x = codec.decode(seeded_gaussian(6, 64).reshape(SHAPE))
    with pytest.raises(DivergenceError, match="step_size"):
        optimize_latent(x, codec, OptimizerConfig(iterations=200, step_size=5.0))


@pytest.mark.parametrize("kwargs", [dict(iterations=0), dict(step_size=0.0),
                                    dict(step_size=-1.0), dict(loss_threshold=-1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        OptimizerConfig(**kwargs)
