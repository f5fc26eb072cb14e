import numpy as np
import pytest

from noisestego.errors import ConfigurationError, ConvergenceError, DivergenceError
from noisestego.models import ZeroPredictor, gaussian_oracle, mixture_oracle
from noisestego.rng import seeded_gaussian
from noisestego.schedule import NoiseSchedule, build_schedule
from noisestego.solvers import (SolverConfig, invert_backward_euler_first_order,
                                invert_backward_euler_second_order,
                                invert_naive_first_order, invert_naive_second_order,
                                sample_first_order, sample_second_order)

SHAPE = (8, 8)
Z = seeded_gaussian(42, 64).reshape(SHAPE)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# -- zero predictor: everything is exact --------------------------------


def test_zero_predictor_telescopes():
    s = build_schedule(50)
    traj = sample_first_order(Z, s, ZeroPredictor())
    expected = (s.sigma(s.timesteps[0]) / s.sigma(s.timesteps[-1])) * Z
    assert np.max(np.abs(traj.final - expected)) <= 1e-12
    assert np.array_equal(sample_second_order(Z, s, ZeroPredictor()).states, traj.states)


def test_zero_predictor_naive_inversion_exact():
    s = build_schedule(50)
    data = sample_first_order(Z, s, ZeroPredictor()).final
    for invert in (invert_naive_first_order, invert_naive_second_order):
        assert np.max(np.abs(invert(data, s, ZeroPredictor()).noise_estimate - Z)) <= 1e-12


def test_zero_predictor_backward_euler_converges_immediately():
    s = build_schedule(50)
    data = sample_first_order(Z, s, ZeroPredictor()).final
    for invert in (invert_backward_euler_first_order, invert_backward_euler_second_order):
        result = invert(data, s, ZeroPredictor(), SolverConfig())
        assert np.all(result.iterations == 1)
        assert np.all(result.converged)
        assert result.residuals.max() <= 1e-12
        assert np.max(np.abs(result.noise_estimate - Z)) <= 1e-12


# -- trajectories ---------------------------------------------------------


def test_trajectory_recording():
    s = build_schedule(20)
    oracle = gaussian_oracle(0.3, 1.0, SHAPE)
    traj = sample_first_order(Z, s, oracle)
    assert traj.states.shape == (21, 8, 8)
    assert np.all(np.diff(traj.times) < 0)          # sampling walks time down
    assert np.array_equal(traj.initial, Z)
    inv = invert_naive_first_order(traj.final, s, oracle)
    assert np.all(np.diff(inv.trajectory.times) > 0)  # inversion walks time up


# -- accuracy against the exact Gaussian flow map -------------------------


def test_first_order_error_vs_closed_form_standard_normal():
    # For a standard-normal prior the exact flow map is the identity; the
    # first-order sampler contracts by cos(pi*dt/2) per step, about 2.4e-2
    # total at 50 steps, an order-h effect (not a bug).
    s = build_schedule(50)
    oracle = gaussian_oracle(0.0, 1.0, SHAPE)
    final = sample_first_order(Z, s, oracle).final
    reference = oracle.transport(Z, s.timesteps[-1], s.timesteps[0], s)
    err = rel_err(final, reference)
    assert 0.02 <= err <= 0.03


def test_second_order_beats_first_order_on_gaussian():
    s = build_schedule(50)
    oracle = gaussian_oracle(0.7, 0.5, SHAPE)
    reference = oracle.transport(Z, s.timesteps[-1], s.timesteps[0], s)
    e1 = rel_err(sample_first_order(Z, s, oracle).final, reference)
    e2 = rel_err(sample_second_order(Z, s, oracle).final, reference)
    assert e2 < e1


@pytest.mark.parametrize("sampler,expected,tol", [(sample_first_order, 1.0, 0.15),
                                                  (sample_second_order, 2.0, 0.25)])
def test_convergence_order_on_gaussian(sampler, expected, tol):
    oracle = gaussian_oracle(0.4, 0.8, SHAPE)
    counts = np.array([10, 20, 40, 80])
    errs = []
    for n in counts:
        s = build_schedule(int(n))
        reference = oracle.transport(Z, s.timesteps[-1], s.timesteps[0], s)
        errs.append(rel_err(sampler(Z, s, oracle).final, reference))
    slope = -np.polyfit(np.log(counts), np.log(errs), 1)[0]
    assert abs(slope - expected) <= tol


def test_second_order_beats_first_on_mixture():
    oracle = mixture_oracle(11, 4, 3.0, SHAPE)
    s = build_schedule(50)
    ref = sample_second_order(Z, build_schedule(500), oracle).final
    e1 = np.linalg.norm(sample_first_order(Z, s, oracle).final - ref)
    e2 = np.linalg.norm(sample_second_order(Z, s, oracle).final - ref)
    assert e2 < e1


# -- naive inversion -------------------------------------------------------


def test_naive_roundtrip_error_band_gaussian():
    s = build_schedule(50)
    oracle = gaussian_oracle(0.7, 0.5, SHAPE)
    data = sample_first_order(Z, s, oracle).final
    err = rel_err(invert_naive_first_order(data, s, oracle).noise_estimate, Z)
    assert 0.0 < err <= 0.1


# -- backward Euler, first order -------------------------------------------


def test_backward_euler_residuals_within_epsilon():
    s = build_schedule(50)
    oracle = gaussian_oracle(0.7, 0.5, SHAPE)
    data = sample_first_order(Z, s, oracle).final
    result = invert_backward_euler_first_order(data, s, oracle, SolverConfig(epsilon=1e-6))
    assert np.all(result.converged)
    assert result.residuals.max() <= 1e-6
    assert result.iterations.max() <= 100


def test_forward_backward_consistency():
    # Reconstructed states must reproduce their targets through the forward
    # step, recomputed here from alpha/sigma directly.
    s = build_schedule(30)
    oracle = mixture_oracle(11, 4, 3.0, SHAPE)
    data = sample_first_order(Z, s, oracle).final
    cfg = SolverConfig(epsilon=1e-8, max_iters=200)
    result = invert_backward_euler_first_order(data, s, oracle, cfg)
    ts = s.timesteps
    states = result.trajectory.states
    for k in range(1, len(ts)):
        a_lo, s_lo = s.alpha(ts[k - 1]), s.sigma(ts[k - 1])
        s_hi = s.sigma(ts[k])
        h = s.log_snr(ts[k]) - s.log_snr(ts[k - 1])
        forward = (s_lo / s_hi) * states[k] - a_lo * (np.exp(h) - 1.0) * \
            oracle.predict(states[k], ts[k], s)
        assert np.max(np.abs(forward - states[k - 1])) <= cfg.epsilon + 1e-12


def test_backward_euler_halves_mixture_roundtrip_error():
    s = build_schedule(50)
    oracle = mixture_oracle(11, 4, 3.0, SHAPE)
    data = sample_first_order(Z, s, oracle).final
    naive = rel_err(invert_naive_first_order(data, s, oracle).noise_estimate, Z)
    implicit = rel_err(
        invert_backward_euler_first_order(data, s, oracle, SolverConfig()).noise_estimate, Z)
    assert implicit <= 0.5 * naive


def test_fixed_point_independent_of_iteration_step():
    # Damping h in {0.1, 0.5, 1.0} changes the iteration count, not the
    # fixed point: per step the solutions agree within 10*epsilon, and end
    # states only drift by the accumulated per-step tolerance.
    oracle = gaussian_oracle(0.7, 0.5, SHAPE)
    eps = 1e-8
    cfgs = [SolverConfig(epsilon=eps, iter_step=h, max_iters=2000) for h in (0.1, 0.5, 1.0)]

    s2 = build_schedule(2)
    data2 = sample_first_order(Z, s2, oracle).final
    singles = [invert_backward_euler_first_order(data2, s2, oracle, c).noise_estimate
               for c in cfgs]
    for other in singles[1:]:
        assert np.max(np.abs(other - singles[0])) <= 10 * eps

    s50 = build_schedule(50)
    data50 = sample_first_order(Z, s50, oracle).final
    finals = [invert_backward_euler_first_order(data50, s50, oracle, c).noise_estimate
              for c in cfgs]
    for other in finals[1:]:
        assert np.max(np.abs(other - finals[0])) <= 10 * eps * s50.num_steps


# -- backward Euler, second order -------------------------------------------


def test_second_order_backward_euler_beats_naive_on_gaussian():
    s = build_schedule(50)
    oracle = gaussian_oracle(0.7, 0.5, SHAPE)
    data = sample_second_order(Z, s, oracle).final
    naive = rel_err(invert_naive_second_order(data, s, oracle).noise_estimate, Z)
    implicit = rel_err(invert_backward_euler_second_order(
        data, s, oracle, SolverConfig(substeps=5)).noise_estimate, Z)
    assert implicit <= 0.5 * naive        # at least a 2x margin


def test_mixture_inversion_error_ordering():
    # naive > coarse-substep implicit >= fine-substep implicit.
    s = build_schedule(50)
    oracle = mixture_oracle(11, 4, 3.0, SHAPE)
    data = sample_second_order(Z, s, oracle).final
    e_naive = rel_err(invert_naive_second_order(data, s, oracle).noise_estimate, Z)
    e_coarse = rel_err(invert_backward_euler_second_order(
        data, s, oracle, SolverConfig(substeps=1)).noise_estimate, Z)
    e_fine = rel_err(invert_backward_euler_second_order(
        data, s, oracle, SolverConfig(substeps=5)).noise_estimate, Z)
    assert e_naive > e_coarse
    assert e_coarse >= e_fine - 1e-6


def test_second_order_inversion_needs_three_timesteps():
    tiny = NoiseSchedule(np.array([0.3, 0.7]))
    with pytest.raises(ConfigurationError):
        invert_backward_euler_second_order(Z, tiny, ZeroPredictor(), SolverConfig())


def test_second_order_inversion_minimal_schedule():
    s = build_schedule(2)
    oracle = gaussian_oracle(0.2, 1.0, SHAPE)
    data = sample_second_order(Z, s, oracle).final
    result = invert_backward_euler_second_order(data, s, oracle, SolverConfig())
    assert result.residuals.shape == (2,)
    assert np.all(result.converged)


# -- determinism and failure modes ------------------------------------------


def test_bitwise_determinism():
    s = build_schedule(30)
    oracle = mixture_oracle(11, 4, 3.0, SHAPE)
    run = lambda: invert_backward_euler_second_order(
        sample_second_order(Z, s, oracle).final, s, oracle, SolverConfig()).noise_estimate
    assert np.array_equal(run(), run())


class ExplodingPredictor:
    def predict(self, x, t, schedule):
        return np.full_like(x, np.inf)


def test_divergence_raises_named_error():
    s = build_schedule(10)
    with pytest.raises(DivergenceError, match="step"):
        sample_first_order(Z, s, ExplodingPredictor())
    with pytest.raises(DivergenceError):
        invert_naive_first_order(Z, s, ExplodingPredictor())


def test_strict_mode_raises_on_exhaustion():
    s = build_schedule(50)
    oracle = gaussian_oracle(0.7, 0.5, SHAPE)
    data = sample_first_order(Z, s, oracle).final
    cfg = SolverConfig(epsilon=1e-13, max_iters=1, strict=True)
    with pytest.raises(ConvergenceError) as info:
        invert_backward_euler_first_order(data, s, oracle, cfg)
    assert info.value.residual > 0


def test_non_strict_mode_warns_and_continues():
    s = build_schedule(50)
    oracle = gaussian_oracle(0.7, 0.5, SHAPE)
    data = sample_first_order(Z, s, oracle).final
    cfg = SolverConfig(epsilon=1e-13, max_iters=1, strict=False)
    with pytest.warns(RuntimeWarning):
        result = invert_backward_euler_first_order(data, s, oracle, cfg)
    assert not np.all(result.converged)
    assert np.isfinite(result.noise_estimate).all()


@pytest.mark.parametrize("kwargs", [dict(epsilon=0.0), dict(iter_step=0.0),
                                    dict(iter_step=1.5), dict(max_iters=0),
                                    dict(substeps=0)])
def test_solver_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kwargs)
