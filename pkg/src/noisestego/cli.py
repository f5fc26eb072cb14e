"""Command-line interface.

Every subcommand reads one JSON config file plus optional --set
key=value overrides.  Exit codes: 0 success, 2 configuration error,
3 capacity error, 4 convergence failure in strict solver mode.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .attacks import apply_attack
from .codec import StegoKey, bits_to_bytes, bytes_to_bits
from .config import PipelineConfig
from .errors import CapacityError, ConfigurationError, ConvergenceError, StegoError
from .io import read_tensor, write_tensor
from .pipeline import convergence_study, embed_and_generate, receive_and_extract, run_evaluation


def _key_override(config: PipelineConfig, key_arg: str | None) -> PipelineConfig:
    """Replace the config key with one loaded from a file path or hex string."""
    if key_arg is None:
        return config
    if os.path.exists(key_arg):
        key = StegoKey.load(key_arg)
    else:
        key = StegoKey.from_hex(key_arg)
    return dataclasses.replace(config, key=key)


def _cmd_keygen(args) -> int:
    config = PipelineConfig.from_file(args.config, args.set)
    key = config.key
    if args.random:
        rand = int.from_bytes(os.urandom(24), "little")
        key = StegoKey(rand & (2 ** 64 - 1), (rand >> 64) & (2 ** 64 - 1),
                       (rand >> 128) & (2 ** 64 - 1), key.block_size)
    key.save(args.out)
    print(f"wrote key {args.out} (hex {key.to_hex()})")
    return 0


def _cmd_embed(args) -> int:
    config = _key_override(PipelineConfig.from_file(args.config, args.set), args.key)
    with open(args.message, "rb") as fh:
        payload = fh.read()
    bits = bytes_to_bits(payload, config.message_blocks, config.key.block_size)
    sender = embed_and_generate(config, bits)
    write_tensor(args.out, sender.signal)
    if args.save_noise:
        write_tensor(args.save_noise, sender.stego_noise)
    print(f"embedded {bits.size} bit payload into {args.out} "
          f"(signal length {sender.signal.size})")
    return 0


def _cmd_extract(args) -> int:
    config = _key_override(PipelineConfig.from_file(args.config, args.set), args.key)
    signal = read_tensor(args.signal).reshape(-1)
    bits, diag = receive_and_extract(config, signal)
    with open(args.out, "wb") as fh:
        fh.write(bits_to_bytes(bits))
    note = ""
    if diag.residuals is not None:
        note = f"; max inversion residual {diag.residuals.max():.3e}"
    print(f"extracted {bits.size} bits to {args.out}{note}")
    return 0


def _cmd_attack(args) -> int:
    config = PipelineConfig.from_file(args.config, args.set)
    if not 0 <= args.index < len(config.attacks):
        raise ConfigurationError(
            f"attack index {args.index} out of range for {len(config.attacks)} configured attacks")
    spec = config.attacks[args.index]
    signal = read_tensor(args.signal).reshape(-1)
    write_tensor(args.out, apply_attack(signal, spec))
    print(f"applied {spec.label()} -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    config = PipelineConfig.from_file(args.config, args.set)
    if args.report:
        config = dataclasses.replace(config, report_path=args.report)
    report = run_evaluation(config)
    for row in report.attacks:
        print(f"{row['label']:32s} mean BER {row['ber_mean']:.4f} (std {row['ber_std']:.4f})")
    if report.gaussianity:
        print(f"gaussianity: KS={report.gaussianity['statistic']:.5f} "
              f"p={report.gaussianity['p_value']:.4f}")
    if config.report_path:
        print(f"report written to {config.report_path} "
              f"(fingerprint {report.fingerprint})")
    return 0


def _cmd_study(args) -> int:
    config = PipelineConfig.from_file(args.config, args.set)
    if args.out:
        config = dataclasses.replace(config, study_csv=args.out)
    rows = convergence_study(config)
    for row in rows:
        print(f"steps={row['num_steps']:4d} order={row['solver_order']} "
              f"{row['inversion']:14s} roundtrip={row['roundtrip_error']:.3e}")
    if config.study_csv:
        print(f"study written to {config.study_csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisestego",
        description="Bit embedding in diffusion initial noise, with implicit-inversion extraction")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted path, JSON value)")

    p = sub.add_parser("keygen", help="write the configured key as a binary key file")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--random", action="store_true",
                   help="draw fresh seeds from the OS instead of the config")
    p.set_defaults(func=_cmd_keygen)

    p = sub.add_parser("embed", help="embed a message file and generate the carrier signal")
    common(p)
    p.add_argument("--message", required=True, help="raw message bytes")
    p.add_argument("--out", required=True, help="output signal tensor")
    p.add_argument("--key", help="key file path or hex string (overrides config)")
    p.add_argument("--save-noise", help="also dump the embedded initial noise tensor")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("extract", help="recover the message from a signal file")
    common(p)
    p.add_argument("--signal", required=True)
    p.add_argument("--out", required=True, help="output message bytes")
    p.add_argument("--key", help="key file path or hex string (overrides config)")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("attack", help="apply one configured attack to a stored signal")
    common(p)
    p.add_argument("--signal", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--index", type=int, default=0, help="index into the config attack suite")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("evaluate", help="run the trials x attacks evaluation harness")
    common(p)
    p.add_argument("--report", help="report JSON path (overrides config output.report)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("convergence-study", help="roundtrip error grid over step counts")
    common(p)
    p.add_argument("--out", help="CSV path (overrides config output.study_csv)")
    p.set_defaults(func=_cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 4
    except StegoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
