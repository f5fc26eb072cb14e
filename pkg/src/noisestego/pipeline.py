"""End-to-end orchestration and the evaluation harness.

Sender path: embed bits into initial noise, run the sampler down to the
data end, decode to a signal.  Receiver path: encode the (possibly
attacked) signal, optionally refine the latent by gradient descent,
invert the sampler back to the noise end, extract bits.  The receiver
sees only (signal, key, config) - never the sender's ground truth.

run_evaluation loops trials x attack suite, aggregates bit error rates
and solver diagnostics into a reproducible report: the same config and
master seed produce byte-identical output, if need be across parallel
workers, because every random stream is derived from (master_seed, role,
indices) and results are merged in (attack, trial) order.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import solvers
from .attacks import AttackSpec, apply_attack
from .codec import bit_error_rate, embed, extract
from .config import PipelineConfig
from .io import write_tensor
from .latent_opt import optimize_latent
from .rng import derive_seed, gaussian, philox
from .schedule import build_schedule

MIN_GAUSSIANITY_SAMPLES = 1000


@dataclass
class SenderOutput:
    """Signal to transmit plus ground truth kept for evaluation only."""

    signal: np.ndarray
    stego_noise: np.ndarray      # embedded initial noise
    generated_latent: np.ndarray  # data-end state the codec decoded


@dataclass
class ReceiverDiagnostics:
    residuals: np.ndarray | None
    iterations: np.ndarray | None
    converged: np.ndarray | None
    losses: np.ndarray | None


@dataclass
class _Context:
    config: PipelineConfig
    schedule: object
    oracle: object
    codec: object


def _context(config: PipelineConfig) -> _Context:
    codec = config.build_codec()
    if config.codec.dump_weights:
        write_tensor(config.codec.dump_weights, codec.weights)
    return _Context(config, config.build_schedule(), config.build_oracle(), codec)


def message_bits_for_trial(config: PipelineConfig, trial: int) -> np.ndarray:
    """Uniform random message bits, deterministic in (master_seed, trial)."""
    n = config.key.block_size
    gen = philox(derive_seed(config.master_seed, "message", trial))
    return gen.integers(0, 2, size=(config.message_blocks, n, n), dtype=np.uint8)


def _generate(ctx: _Context, bits: np.ndarray) -> SenderOutput:
    cfg = ctx.config
    noise = embed(bits, cfg.key, cfg.latent_shape)
    if cfg.solver_order == 1:
        traj = solvers.sample_first_order(noise, ctx.schedule, ctx.oracle)
    else:
        traj = solvers.sample_second_order(noise, ctx.schedule, ctx.oracle)
    signal = ctx.codec.decode(traj.final)
    return SenderOutput(signal, noise, traj.final)


def _receive(ctx: _Context, signal: np.ndarray):
    cfg = ctx.config
    losses = None
    if cfg.latent_opt_enabled:
        opt = optimize_latent(signal, ctx.codec, cfg.latent_opt)
        latent = opt.latent
        losses = opt.losses
    else:
        latent = ctx.codec.encode(signal)
    if cfg.solver_order == 1:
        if cfg.inversion == "naive":
            result = solvers.invert_naive_first_order(latent, ctx.schedule, ctx.oracle)
        else:
            result = solvers.invert_backward_euler_first_order(
                latent, ctx.schedule, ctx.oracle, cfg.solver)
    else:
        if cfg.inversion == "naive":
            result = solvers.invert_naive_second_order(latent, ctx.schedule, ctx.oracle)
        else:
            result = solvers.invert_backward_euler_second_order(
                latent, ctx.schedule, ctx.oracle, cfg.solver)
    bits = extract(result.noise_estimate, cfg.key, cfg.message_blocks)
    diag = ReceiverDiagnostics(result.residuals, result.iterations, result.converged, losses)
    return bits, diag


def embed_and_generate(config: PipelineConfig, bits: np.ndarray) -> SenderOutput:
    """Sender: embed the message and generate the carrier signal."""
    return _generate(_context(config), bits)


def receive_and_extract(config: PipelineConfig, signal: np.ndarray):
    """Receiver: recover message bits and diagnostics from a signal alone."""
    return _receive(_context(config), signal)


def gaussianity_test(samples) -> tuple:
    """One-sample Kolmogorov-Smirnov test against the standard normal.

    Returns (statistic, p_value) with the p-value taken from the
    asymptotic KS distribution; requires at least 1000 samples.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size < MIN_GAUSSIANITY_SAMPLES:
        raise ValueError(
            f"gaussianity test needs >= {MIN_GAUSSIANITY_SAMPLES} samples, got {samples.size}")
    result = stats.kstest(samples, "norm", mode="asymp")
    return float(result.statistic), float(result.pvalue)


def _attack_for_trial(spec: AttackSpec, config: PipelineConfig,
                      attack_index: int, trial: int) -> AttackSpec:
    """Give stochastic attacks a per-(attack, trial) derived seed."""
    if spec.kind != "additive_noise":
        return spec
    seed = derive_seed(config.master_seed, "attack", attack_index, spec.seed, trial)
    return AttackSpec(spec.kind, sigma=spec.sigma, seed=seed)


@dataclass
class EvalReport:
    """Aggregated evaluation results; serializes deterministically."""

    fingerprint: str
    config: dict
    attacks: list          # one dict per attack suite entry
    gaussianity: dict | None
    cells: list            # per (attack, trial) diagnostics, (attack, trial) sorted

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "config_fingerprint": self.fingerprint,
            "attacks": self.attacks,
            "gaussianity": self.gaussianity,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _run_cell(ctx: _Context, sender: SenderOutput, bits: np.ndarray,
              attack_index: int, trial: int) -> dict:
    spec = _attack_for_trial(ctx.config.attacks[attack_index], ctx.config, attack_index, trial)
    attacked = apply_attack(sender.signal, spec)
    decoded, diag = _receive(ctx, attacked)
    return {
        "attack": attack_index,
        "trial": trial,
        "ber": bit_error_rate(bits, decoded),
        "diag": diag,
    }


def run_evaluation(config: PipelineConfig) -> EvalReport:
    """Loop trials x attack suite and aggregate a reproducible report."""
    ctx = _context(config)
    trials = range(config.trials)

    def sender_for(trial):
        return _generate(ctx, message_bits_for_trial(config, trial))

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            senders = list(pool.map(sender_for, trials))
    else:
        senders = [sender_for(trial) for trial in trials]

    jobs = [(ai, trial) for ai in range(len(config.attacks)) for trial in trials]

    def receive_for(job):
        ai, trial = job
        return _run_cell(ctx, senders[trial], message_bits_for_trial(config, trial), ai, trial)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            cells = list(pool.map(receive_for, jobs))
    else:
        cells = [receive_for(job) for job in jobs]
    cells.sort(key=lambda c: (c["attack"], c["trial"]))

    attack_rows = []
    for ai, spec in enumerate(config.attacks):
        subset = [c for c in cells if c["attack"] == ai]
        bers = np.array([c["ber"] for c in subset])
        row = {
            "index": ai,
            "kind": spec.kind,
            "label": spec.label(),
            "ber": [float(b) for b in bers],
            "ber_mean": float(bers.mean()),
            "ber_std": float(bers.std()),
        }
        diags = [c["diag"] for c in subset]
        if diags[0].residuals is not None:
            row["inversion"] = {
                "max_exit_residual": float(max(d.residuals.max() for d in diags)),
                "max_iterations": int(max(d.iterations.max() for d in diags)),
                "converged_fraction": float(np.mean([d.converged.mean() for d in diags])),
            }
        if diags[0].losses is not None:
            row["latent_opt"] = {
                "initial_loss_mean": float(np.mean([d.losses[0] for d in diags])),
                "final_loss_mean": float(np.mean([d.losses[-1] for d in diags])),
            }
        attack_rows.append(row)

    pooled = np.concatenate([s.stego_noise.reshape(-1) for s in senders])
    gaussianity = None
    if pooled.size >= MIN_GAUSSIANITY_SAMPLES:
        statistic, p_value = gaussianity_test(pooled)
        gaussianity = {"num_samples": int(pooled.size),
                       "statistic": statistic, "p_value": p_value}

    report = EvalReport(config.fingerprint(), config.to_dict(), attack_rows, gaussianity, cells)
    if config.report_path:
        with open(config.report_path, "w") as fh:
            fh.write(report.to_json())
    if config.residual_csv:
        _write_residual_csv(config.residual_csv, cells)
    if config.loss_csv:
        _write_loss_csv(config.loss_csv, cells)
    return report


def _write_residual_csv(path, cells) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack_index", "trial", "step", "residual", "iterations", "converged"])
        for cell in cells:
            diag = cell["diag"]
            if diag.residuals is None:
                continue
            for step, (res, its, conv) in enumerate(
                    zip(diag.residuals, diag.iterations, diag.converged), start=1):
                writer.writerow([cell["attack"], cell["trial"], step,
                                 repr(float(res)), int(its), int(conv)])


def _write_loss_csv(path, cells) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack_index", "trial", "iteration", "loss"])
        for cell in cells:
            diag = cell["diag"]
            if diag.losses is None:
                continue
            for it, loss in enumerate(diag.losses):
                writer.writerow([cell["attack"], cell["trial"], it, repr(float(loss))])


def convergence_study(config: PipelineConfig):
    """Roundtrip error grid over step counts x solver order x inversion mode.

    Each row reports the relative error of sample-then-invert noise
    reconstruction for a seeded standard-normal start tensor.
    """
    f, t = config.latent_shape
    oracle = config.oracle.build(config.latent_shape)
    gen = philox(derive_seed(config.master_seed, "study"))
    z_noise = gaussian(gen, f * t).reshape(f, t)
    rows = []
    for num_steps in config.study_step_counts:
        schedule = build_schedule(num_steps, config.t_min, config.t_max)
        for order in (1, 2):
            sampler = solvers.sample_first_order if order == 1 else solvers.sample_second_order
            traj = sampler(z_noise, schedule, oracle)
            for mode in ("naive", "backward_euler"):
                if order == 1:
                    invert = (solvers.invert_naive_first_order if mode == "naive"
                              else solvers.invert_backward_euler_first_order)
                else:
                    invert = (solvers.invert_naive_second_order if mode == "naive"
                              else solvers.invert_backward_euler_second_order)
                if mode == "naive":
                    result = invert(traj.final, schedule, oracle)
                else:
                    result = invert(traj.final, schedule, oracle, config.solver)
                err = (np.linalg.norm(result.noise_estimate - z_noise)
                       / np.linalg.norm(z_noise))
                rows.append({"num_steps": num_steps, "solver_order": order,
                             "inversion": mode, "roundtrip_error": float(err)})
    if config.study_csv:
        write_study_csv(config.study_csv, rows)
    return rows


def write_study_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["num_steps", "solver_order", "inversion", "roundtrip_error"])
        for row in rows:
            writer.writerow([row["num_steps"], row["solver_order"],
                             row["inversion"], repr(row["roundtrip_error"])])
