"""Pipeline configuration: parsing, validation, and fingerprinting.

Configs are flat JSON documents.  Every consumer works from the resolved
PipelineConfig dataclass, and the canonical JSON rendering of that
resolved config is hashed (64-bit FNV-1a) into the report fingerprint,
so two byte-identical fingerprints imply identical effective settings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .attacks import AttackSpec
from .codec import StegoKey, max_blocks
from .errors import CapacityError, ConfigurationError
from .latent_opt import OptimizerConfig
from .models import LatentCodec, build_codec, gaussian_oracle, mixture_oracle, ZeroPredictor
from .rng import fnv1a64
from .schedule import DEFAULT_T_MAX, DEFAULT_T_MIN, NoiseSchedule, build_schedule
from .solvers import SolverConfig

INVERSION_MODES = ("naive", "backward_euler")
ORACLE_KINDS = ("zero", "gaussian", "mixture")


def _take(section: dict, context: str, known: dict):
    """Pick known keys (with defaults) and reject unknown ones."""
    extra = set(section) - set(known)
    if extra:
        raise ConfigurationError(f"unknown {context} field(s): {sorted(extra)}")
    return {name: section.get(name, default) for name, default in known.items()}


@dataclass(frozen=True)
class OracleSpec:
    kind: str = "mixture"
    seed: int = 0
    components: int = 4
    radius: float = 3.0
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ConfigurationError(f"oracle.kind must be one of {ORACLE_KINDS}, got {self.kind!r}")
        if self.kind == "mixture" and self.components < 1:
            raise ConfigurationError("oracle.components must be >= 1")
        if self.kind == "gaussian" and self.variance <= 0:
            raise ConfigurationError("oracle.variance must be positive")

    def build(self, latent_shape):
        if self.kind == "zero":
            return ZeroPredictor()
        if self.kind == "gaussian":
            return gaussian_oracle(self.mean, self.variance, latent_shape)
        return mixture_oracle(self.seed, self.components, self.radius, latent_shape)


@dataclass(frozen=True)
class CodecSpec:
    seed: int = 0
    expansion: int = 4
    nonlinearity: float = 0.1
    dump_weights: str | None = None

    def __post_init__(self):
        if self.expansion < 1:
            raise ConfigurationError("codec.expansion must be >= 1")
        if self.nonlinearity < 0:
            raise ConfigurationError("codec.nonlinearity must be >= 0")

    def build(self, latent_shape) -> LatentCodec:
        return build_codec(self.seed, latent_shape, self.expansion, self.nonlinearity)


@dataclass(frozen=True)
class PipelineConfig:
    latent_shape: tuple
    key: StegoKey
    message_blocks: int
    num_steps: int = 50
    t_min: float = DEFAULT_T_MIN
    t_max: float = DEFAULT_T_MAX
    solver_order: int = 2
    inversion: str = "backward_euler"
    solver: SolverConfig = SolverConfig()
    latent_opt_enabled: bool = True
    latent_opt: OptimizerConfig = OptimizerConfig()
    oracle: OracleSpec = OracleSpec()
    codec: CodecSpec = CodecSpec()
    attacks: tuple = (AttackSpec("none"),)
    trials: int = 20
    master_seed: int = 0
    workers: int = 1
    study_step_counts: tuple = (10, 20, 40, 80)
    report_path: str | None = None
    residual_csv: str | None = None
    loss_csv: str | None = None
    study_csv: str | None = None

    def __post_init__(self):
        f, t = self.latent_shape
        if f < 1 or t < 1:
            raise ConfigurationError(f"latent_shape must be two positive integers, got {self.latent_shape}")
        if self.solver_order not in (1, 2):
            raise ConfigurationError(f"solver.order must be 1 or 2, got {self.solver_order!r}")
        if self.inversion not in INVERSION_MODES:
            raise ConfigurationError(
                f"solver.inversion must be one of {INVERSION_MODES}, got {self.inversion!r}")
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials!r}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers!r}")
        if self.message_blocks < 1:
            raise ConfigurationError(f"message_blocks must be >= 1, got {self.message_blocks!r}")
        cap = max_blocks(self.latent_shape, self.key.block_size)
        if cap < 1:
            raise ConfigurationError(
                f"block_size {self.key.block_size} does not fit latent shape {self.latent_shape}")
        if self.message_blocks > cap:
            raise CapacityError(
                f"message_blocks={self.message_blocks} exceeds capacity: latent {f}x{t} holds "
                f"at most {cap} blocks ({cap * self.key.block_size ** 2} bits) at "
                f"N={self.key.block_size}")
        for n in self.study_step_counts:
            if n < 2:
                raise ConfigurationError(f"study step counts must be >= 2, got {n}")

    # -- construction -------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        top = _take(raw, "config", {
            "latent_shape": None, "key": None, "message_blocks": 1,
            "schedule": {}, "solver": {}, "latent_opt": {}, "oracle": {},
            "codec": {}, "attacks": [{"kind": "none"}], "trials": 20,
            "master_seed": 0, "workers": 1, "study_step_counts": [10, 20, 40, 80],
            "output": {},
        })
        if top["latent_shape"] is None:
            raise ConfigurationError("latent_shape is required")
        if top["key"] is None:
            raise ConfigurationError("key section is required")

        key = _take(top["key"], "key", {
            "matrix_seed": 0, "magnitude_seed": 0, "shuffle_seed": 0, "block_size": 8})
        sched = _take(top["schedule"], "schedule", {
            "num_steps": 50, "t_min": DEFAULT_T_MIN, "t_max": DEFAULT_T_MAX})
        solver = _take(top["solver"], "solver", {
            "order": 2, "inversion": "backward_euler", "epsilon": 1e-6,
            "iter_step": 0.5, "max_iters": 100, "substeps": 5, "strict": False})
        opt = _take(top["latent_opt"], "latent_opt", {
            "enabled": True, "iterations": 100, "step_size": 0.1, "loss_threshold": 1e-10})
        out = _take(top["output"], "output", {
            "report": None, "residual_csv": None, "loss_csv": None, "study_csv": None})

        try:
            oracle = OracleSpec(**_take(top["oracle"], "oracle", {
                "kind": "mixture", "seed": 0, "components": 4, "radius": 3.0,
                "mean": 0.0, "variance": 1.0}))
            codec = CodecSpec(**_take(top["codec"], "codec", {
                "seed": 0, "expansion": 4, "nonlinearity": 0.1, "dump_weights": None}))
            attacks = tuple(
                AttackSpec(**_take(entry, f"attacks[{i}]", {
                    "kind": None, "sigma": 0.0, "bits": 16, "rho": 0.0,
                    "ratio": 1.0, "seed": 0}))
                for i, entry in enumerate(top["attacks"]))
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
        if not attacks:
            raise ConfigurationError("attacks list must not be empty")

        return cls(
            latent_shape=tuple(int(v) for v in top["latent_shape"]),
            key=StegoKey(key["matrix_seed"], key["magnitude_seed"],
                         key["shuffle_seed"], key["block_size"]),
            message_blocks=int(top["message_blocks"]),
            num_steps=int(sched["num_steps"]),
            t_min=float(sched["t_min"]),
            t_max=float(sched["t_max"]),
            solver_order=int(solver["order"]),
            inversion=str(solver["inversion"]),
            solver=SolverConfig(epsilon=float(solver["epsilon"]),
                                iter_step=float(solver["iter_step"]),
                                max_iters=int(solver["max_iters"]),
                                substeps=int(solver["substeps"]),
                                strict=bool(solver["strict"])),
            latent_opt_enabled=bool(opt["enabled"]),
            latent_opt=OptimizerConfig(iterations=int(opt["iterations"]),
                                       step_size=float(opt["step_size"]),
                                       loss_threshold=float(opt["loss_threshold"])),
            oracle=oracle,
            codec=codec,
            attacks=attacks,
            trials=int(top["trials"]),
            master_seed=int(top["master_seed"]),
            workers=int(top["workers"]),
            study_step_counts=tuple(int(n) for n in top["study_step_counts"]),
            report_path=out["report"],
            residual_csv=out["residual_csv"],
            loss_csv=out["loss_csv"],
            study_csv=out["study_csv"],
        )

    @classmethod
    def from_file(cls, path, overrides=()) -> "PipelineConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"config {path} must hold a JSON object")
        for item in overrides:
            apply_override(raw, item)
        return cls.from_dict(raw)

    # -- derived objects ----------------------------------------------

    def build_schedule(self) -> NoiseSchedule:
        return build_schedule(self.num_steps, self.t_min, self.t_max)

    def build_oracle(self):
        return self.oracle.build(self.latent_shape)

    def build_codec(self) -> LatentCodec:
        return self.codec.build(self.latent_shape)

    # -- canonical form ------------------------------------------------

    def to_dict(self) -> dict:
        """Resolved experiment settings; execution details (workers, output
        paths) are deliberately excluded so they cannot change the
        fingerprint or the report bytes."""
        return {
            "latent_shape": list(self.latent_shape),
            "key": {"matrix_seed": self.key.matrix_seed,
                    "magnitude_seed": self.key.magnitude_seed,
                    "shuffle_seed": self.key.shuffle_seed,
                    "block_size": self.key.block_size},
            "message_blocks": self.message_blocks,
            "schedule": {"num_steps": self.num_steps, "t_min": self.t_min, "t_max": self.t_max},
            "solver": {"order": self.solver_order, "inversion": self.inversion,
                       "epsilon": self.solver.epsilon, "iter_step": self.solver.iter_step,
                       "max_iters": self.solver.max_iters, "substeps": self.solver.substeps,
                       "strict": self.solver.strict},
            "latent_opt": {"enabled": self.latent_opt_enabled,
                           "iterations": self.latent_opt.iterations,
                           "step_size": self.latent_opt.step_size,
                           "loss_threshold": self.latent_opt.loss_threshold},
            "oracle": {"kind": self.oracle.kind, "seed": self.oracle.seed,
                       "components": self.oracle.components, "radius": self.oracle.radius,
                       "mean": self.oracle.mean, "variance": self.oracle.variance},
            "codec": {"seed": self.codec.seed, "expansion": self.codec.expansion,
                      "nonlinearity": self.codec.nonlinearity,
                      "dump_weights": self.codec.dump_weights},
            "attacks": [{"kind": a.kind, "sigma": a.sigma, "bits": a.bits,
                         "rho": a.rho, "ratio": a.ratio, "seed": a.seed}
                        for a in self.attacks],
            "trials": self.trials,
            "master_seed": self.master_seed,
            "study_step_counts": list(self.study_step_counts),
        }

    def canonical_text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return f"{fnv1a64(self.canonical_text().encode()):016x}"


def apply_override(raw: dict, item: str) -> None:
    """Apply one --set override 'dotted.path=json_value' to a raw config dict."""
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} must look like key=value")
    path, text = item.split("=", 1)
    keys = path.strip().split(".")
    if not all(keys):
        raise ConfigurationError(f"override {item!r} has an empty key component")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = raw
    for k in keys[:-1]:
        nxt = node.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigurationError(f"override {item!r} descends into non-object {k!r}")
        node = nxt
    node[keys[-1]] = value
