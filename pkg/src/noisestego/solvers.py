"""Probability-flow ODE sampling and its explicit / implicit inversions.

Index conventions
-----------------
The schedule grid is ascending, t_0 (data end) < ... < t_N (noise end),
and h_k = log_snr(t_k) - log_snr(t_{k-1}) < 0.  The exponential-
integrator step between any source time s and destination time u is

    x_u = (sigma_u / sigma_s) x_s - alpha_u (e^{-h} - 1) x0_hat,
    h = log_snr(u) - log_snr(s),

which is first-order exact in h for frozen x0_hat and valid in either
direction.  Sampling walks the grid downward (noise to data) and
evaluates the predictor at the known state and its own time.  Inversion
walks upward; the exact inverse of a sampling step is implicit because
the predictor must be evaluated at the unknown noisier state.

Two inversion families are provided:

* ``naive``: the explicit approximation that evaluates the predictor at
  the known cleaner state while keeping the destination time argument.
  Fast and biased.
* ``backward Euler``: initialize with the naive step, then refine by a
  damped fixed-point iteration, recomputing the cleaner state through
  the forward formula from the current guess until the reconstruction
  residual (max-norm) is within epsilon.  The second-order variant first
  runs a fine-grained explicit inversion (2J substeps over two coarse
  intervals) to estimate the states entering the second-order difference
  term, holds that term constant, and iterates only the first-order
  part; the last segment falls back to the first-order iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DivergenceError
from .models import DataPredictor
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-point iteration controls for the implicit inverters.

    epsilon    : convergence tolerance on the max-norm reconstruction residual
    iter_step  : damping factor h of the update  guess -= h * residual
    max_iters  : forward evaluations allowed per timestep
    substeps   : J, fine substeps per coarse interval in the second-order inverter
    strict     : raise ConvergenceError instead of warning on exhaustion
    """

    epsilon: float = 1e-6
    iter_step: float = 0.5
    max_iters: int = 100
    substeps: int = 5
    strict: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon!r}")
        if not 0.0 < self.iter_step <= 1.0:
            raise ConfigurationError(f"iter_step must lie in (0, 1], got {self.iter_step!r}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters!r}")
        if self.substeps < 1:
            raise ConfigurationError(f"substeps must be >= 1, got {self.substeps!r}")


@dataclass
class Trajectory:
    """Visited (state, time) sequence; times are strictly monotone."""

    times: np.ndarray          # (M,)
    states: np.ndarray         # (M, F, T)

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class InversionResult:
    """Inversion output plus per-step convergence diagnostics.

    residuals/iterations/converged align with coarse steps 1..N and stay
    None for the explicit (naive) inverters, which have no inner loop.
    """

    trajectory: Trajectory
    residuals: np.ndarray | None = None
    iterations: np.ndarray | None = None
    converged: np.ndarray | None = None

    @property
    def noise_estimate(self) -> np.ndarray:
        return self.trajectory.final


def _require_finite(state: np.ndarray, step: int, t: float, what: str) -> None:
    if not np.isfinite(state).all():
        raise DivergenceError(f"{what} produced non-finite values at step {step} (t={t:.6g})")


def _pair(schedule: NoiseSchedule, t_src: float, t_dst: float):
    """Coefficients of the integrator step from t_src to t_dst."""
    sigma_ratio = schedule.sigma(t_dst) / schedule.sigma(t_src)
    h = schedule.log_snr(t_dst) - schedule.log_snr(t_src)
    coef = schedule.alpha(t_dst) * (np.exp(-h) - 1.0)
    return sigma_ratio, coef


def sample_first_order(z_noise: np.ndarray, schedule: NoiseSchedule,
                       predictor: DataPredictor) -> Trajectory:
    """DDIM sampling from the noise end down to the data end."""
    ts = schedule.timesteps
    n = schedule.num_steps
    state = np.array(z_noise, dtype=float)
    states = [state.copy()]
    for k in range(n, 0, -1):
        ratio, coef = _pair(schedule, ts[k], ts[k - 1])
        state = ratio * state - coef * predictor.predict(state, ts[k], schedule)
        _require_finite(state, k, ts[k - 1], "first-order sampling")
        states.append(state.copy())
    return Trajectory(ts[::-1].copy(), np.stack(states))


def sample_second_order(z_noise: np.ndarray, schedule: NoiseSchedule,
                        predictor: DataPredictor) -> Trajectory:
    """Second-order multistep sampling; the first step is first-order."""
    ts = schedule.timesteps
    lam = schedule.log_snrs
    n = schedule.num_steps
    state = np.array(z_noise, dtype=float)
    states = [state.copy()]
    pred_prev = None  # predictor output at the previous (noisier) grid point
    for k in range(n, 0, -1):
        ratio, coef = _pair(schedule, ts[k], ts[k - 1])
        pred_cur = predictor.predict(state, ts[k], schedule)
        if pred_prev is None:
            combined = pred_cur
        else:
            # r = h_{k+1} / h_k, the log-SNR spacing of the history point.
            r = (lam[k + 1] - lam[k]) / (lam[k] - lam[k - 1])
            combined = pred_cur + (pred_cur - pred_prev) / (2.0 * r)
        state = ratio * state - coef * combined
        _require_finite(state, k, ts[k - 1], "second-order sampling")
        states.append(state.copy())
        pred_prev = pred_cur
    return Trajectory(ts[::-1].copy(), np.stack(states))


def invert_naive_first_order(z_data: np.ndarray, schedule: NoiseSchedule,
                             predictor: DataPredictor) -> InversionResult:
    """Explicit inversion: rearranged sampling step, predictor evaluated at
    the known cleaner state with the destination (noisier) time argument."""
    ts = schedule.timesteps
    n = schedule.num_steps
    state = np.array(z_data, dtype=float)
    states = [state.copy()]
    for k in range(1, n + 1):
        ratio, coef = _pair(schedule, ts[k], ts[k - 1])
        state = (state + coef * predictor.predict(state, ts[k], schedule)) / ratio
        _require_finite(state, k, ts[k], "naive first-order inversion")
        states.append(state.copy())
    return InversionResult(Trajectory(ts.copy(), np.stack(states)))


def invert_naive_second_order(z_data: np.ndarray, schedule: NoiseSchedule,
                              predictor: DataPredictor) -> InversionResult:
    """Explicit second-order multistep inversion.

    Same state/time substitution as the first-order naive inverter, with
    the difference term built from the previous step's predictor output;
    the first step has no history and is first-order.
    """
    ts = schedule.timesteps
    lam = schedule.log_snrs
    n = schedule.num_steps
    state = np.array(z_data, dtype=float)
    states = [state.copy()]
    pred_prev = None
    for k in range(1, n + 1):
        ratio, coef = _pair(schedule, ts[k], ts[k - 1])
        pred_cur = predictor.predict(state, ts[k], schedule)
        if pred_prev is None:
            combined = pred_cur
        else:
            r = (lam[k - 1] - lam[k - 2]) / (lam[k] - lam[k - 1])
            combined = pred_cur + (pred_cur - pred_prev) / (2.0 * r)
        state = (state + coef * combined) / ratio
        _require_finite(state, k, ts[k], "naive second-order inversion")
        states.append(state.copy())
        pred_prev = pred_cur
    return InversionResult(Trajectory(ts.copy(), np.stack(states)))


def _refine(guess: np.ndarray, target: np.ndarray, forward, config: SolverConfig, step: int):
    """Damped fixed-point loop: drive forward(guess) onto the known target.

    Returns (state, exit_residual, iterations, converged).  On exhaustion
    the iterate with the smallest residual is kept; strict mode raises.
    """
    best = guess
    best_res = np.inf
    for it in range(1, config.max_iters + 1):
        recon = forward(guess)
        residual = recon - target
        res_norm = float(np.max(np.abs(residual)))
        if not np.isfinite(res_norm):
            raise DivergenceError(f"fixed-point iteration diverged at step {step}")
        if res_norm < best_res:
            best, best_res = guess, res_norm
        if res_norm <= config.epsilon:
            return guess, res_norm, it, True
        guess = guess - config.iter_step * residual
    if config.strict:
        raise ConvergenceError(
            f"inversion step {step} did not reach epsilon={config.epsilon:g} in "
            f"{config.max_iters} iterations (residual {best_res:.3e})",
            residual=best_res,
        )
    warnings.warn(
        f"inversion step {step}: residual {best_res:.3e} after {config.max_iters} "
        "iterations; continuing with the best iterate",
        RuntimeWarning,
        stacklevel=3,
    )
    return best, best_res, config.max_iters, False


def invert_backward_euler_first_order(z_data: np.ndarray, schedule: NoiseSchedule,
                                      predictor: DataPredictor,
                                      config: SolverConfig = SolverConfig()) -> InversionResult:
    """Implicit first-order inversion solved by damped fixed-point iteration.

    Each step initializes with the explicit (naive) estimate, then refines
    until the forward sampling step applied to the guess reproduces the
    known cleaner state within epsilon in max-norm.
    """
    ts = schedule.timesteps
    n = schedule.num_steps
    state = np.array(z_data, dtype=float)
    states = [state.copy()]
    residuals = np.zeros(n)
    iterations = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)
    for k in range(1, n + 1):
        ratio, coef = _pair(schedule, ts[k], ts[k - 1])
        target = state
        guess = (target + coef * predictor.predict(target, ts[k], schedule)) / ratio

        def forward(g):
            return ratio * g - coef * predictor.predict(g, ts[k], schedule)

        state, residuals[k - 1], iterations[k - 1], converged[k - 1] = _refine(
            guess, target, forward, config, k)
        _require_finite(state, k, ts[k], "backward-Euler first-order inversion")
        states.append(state.copy())
    return InversionResult(Trajectory(ts.copy(), np.stack(states)),
                           residuals, iterations, converged)


def _fine_explicit_leg(state: np.ndarray, schedule: NoiseSchedule,
                       predictor: DataPredictor, k: int, substeps: int):
    """Fine-grained explicit inversion across the two coarse intervals
    [t_{k-1}, t_k] and [t_k, t_{k+1}], in 2J substeps of width dt/J.

    Each substep applies

        y <- (sigma_next / sigma_prev) * (y + alpha_next * (e^{h_sub} - 1)
                                              * predict(y, t_next)),

    with h_sub the log-SNR increment of the substep; the predictor sees
    the previous fine state but the next fine time.  Returns the states
    reached at t_k and t_{k+1}.
    """
    y = state
    y_mid = None
    for j in range(1, 2 * substeps + 1):
        t_prev = schedule.time_at(k - 1 + (j - 1) / substeps)
        t_next = schedule.time_at(k - 1 + j / substeps)
        h_sub = schedule.log_snr(t_next) - schedule.log_snr(t_prev)
        m0 = schedule.alpha(t_next) * (np.exp(h_sub) - 1.0) * predictor.predict(y, t_next, schedule)
        y = (schedule.sigma(t_next) / schedule.sigma(t_prev)) * (y + m0)
        _require_finite(y, k, t_next, "fine-grained explicit inversion")
        if j == substeps:
            y_mid = y.copy()
    return y_mid, y


def invert_backward_euler_second_order(z_data: np.ndarray, schedule: NoiseSchedule,
                                       predictor: DataPredictor,
                                       config: SolverConfig = SolverConfig()) -> InversionResult:
    """Implicit second-order inversion.

    Per coarse step: estimate the two noisier grid states by fine-grained
    explicit inversion, freeze the second-order difference term computed
    from them, and solve the remaining first-order implicit relation by
    the damped fixed-point iteration.  The final segment into the noise
    end reuses the first-order implicit step.  Needs at least 3 grid
    points.
    """
    ts = schedule.timesteps
    lam = schedule.log_snrs
    n = schedule.num_steps
    if n < 2:
        raise ConfigurationError("second-order inversion needs a schedule with >= 3 timesteps")
    state = np.array(z_data, dtype=float)
    states = [state.copy()]
    residuals = np.zeros(n)
    iterations = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)

    for k in range(1, n):
        ratio, coef = _pair(schedule, ts[k], ts[k - 1])
        target = state
        y_mid, y_far = _fine_explicit_leg(state, schedule, predictor, k, config.substeps)
        r = (lam[k + 1] - lam[k]) / (lam[k] - lam[k - 1])
        frozen = (coef / (2.0 * r)) * (
            predictor.predict(y_mid, ts[k], schedule)
            - predictor.predict(y_far, ts[k + 1], schedule)
        )

        def forward(g):
            return ratio * g - coef * predictor.predict(g, ts[k], schedule) - frozen

        state, residuals[k - 1], iterations[k - 1], converged[k - 1] = _refine(
            y_mid, target, forward, config, k)
        _require_finite(state, k, ts[k], "backward-Euler second-order inversion")
        states.append(state.copy())

    # Last segment t_{N-1} -> t_N: plain first-order implicit step.
    ratio, coef = _pair(schedule, ts[n], ts[n - 1])
    target = state
    guess = (target + coef * predictor.predict(target, ts[n], schedule)) / ratio

    def forward_last(g):
        return ratio * g - coef * predictor.predict(g, ts[n], schedule)

    state, residuals[n - 1], iterations[n - 1], converged[n - 1] = _refine(
        guess, target, forward_last, config, n)
    _require_finite(state, n, ts[n], "backward-Euler second-order inversion")
    states.append(state.copy())
    return InversionResult(Trajectory(ts.copy(), np.stack(states)),
                           residuals, iterations, converged)
