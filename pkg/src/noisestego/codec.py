"""Keyed mapping between message bits and standard-Gaussian noise tensors.

The embedding path is

    bits -> signed half-normal magnitudes -> orthogonal congruence
    A G A^T per block -> flatten -> Gaussian padding -> keyed shuffle
    -> reshape to [F, T],

and extraction inverts every stage in reverse order, ending with a sign
threshold after the inverse projection.  Because the per-block transform
is an orthogonal congruence and the shuffle is a permutation, the noise
tensor stays i.i.d. standard normal for uniform random bits, and the
noiseless roundtrip recovers the bits exactly.

Message payloads are numpy uint8 arrays of shape (C, N, N) with entries
in {0, 1}; noise tensors are float64 arrays of shape [F, T].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigurationError
from .rng import gaussian, philox

KEY_MAGIC = b"PRDK"
KEY_VERSION = 1
KEY_RECORD_SIZE = 32


@dataclass(frozen=True)
class StegoKey:
    """Seeds for the orthogonal matrix, magnitudes, and shuffle.

    Identical seeds always regenerate identical projection matrices,
    magnitude streams, and permutations.
    """

    matrix_seed: int
    magnitude_seed: int
    shuffle_seed: int
    block_size: int

    def __post_init__(self):
        for name in ("matrix_seed", "magnitude_seed", "shuffle_seed"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2 ** 64:
                raise ConfigurationError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
        if self.block_size < 2:
            raise ConfigurationError(f"block_size must be >= 2, got {self.block_size!r}")

    def to_bytes(self) -> bytes:
        """32-byte record: magic, version, N (u16), three u64 seeds, pad."""
        record = struct.pack(
            "<4sBHQQQ",
            KEY_MAGIC,
            KEY_VERSION,
            self.block_size,
            self.matrix_seed,
            self.magnitude_seed,
            self.shuffle_seed,
        )
        return record + b"\x00" * (KEY_RECORD_SIZE - len(record))

    def to_hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bytes(cls, data: bytes) -> "StegoKey":
        if len(data) != KEY_RECORD_SIZE:
            raise ConfigurationError(f"key record must be {KEY_RECORD_SIZE} bytes, got {len(data)}")
        magic, version, block, m_seed, g_seed, s_seed = struct.unpack("<4sBHQQQ", data[:31])
        if magic != KEY_MAGIC:
            raise ConfigurationError(f"bad key magic {magic!r}")
        if version != KEY_VERSION:
            raise ConfigurationError(f"unsupported key version {version}")
        return cls(m_seed, g_seed, s_seed, block)

    @classmethod
    def from_hex(cls, text: str) -> "StegoKey":
        try:
            raw = bytes.fromhex(text.strip())
        except ValueError as exc:
            raise ConfigurationError(f"key hex string is not valid hex: {exc}") from exc
        return cls.from_bytes(raw)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "StegoKey":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def generate_orthogonal(matrix_seed: int, n: int) -> np.ndarray:
    """Seeded random orthogonal N x N matrix.

    QR decomposition of a seeded Gaussian matrix, with the sign of each
    diagonal entry of R forced positive so the factorization (and hence
    the matrix) is unique for a given seed.
    """
    if n < 2:
        raise ConfigurationError(f"orthogonal matrix size must be >= 2, got {n}")
    raw = gaussian(philox(matrix_seed), n * n).reshape(n, n)
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))
    return q


def max_blocks(latent_shape, block_size: int) -> int:
    """Largest whole block count C_max = floor(F*T / N^2)."""
    f, t = latent_shape
    return (f * t) // (block_size * block_size)


def _check_bits(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.ndim != 3 or bits.shape[1] != bits.shape[2]:
        raise ValueError(f"message bits must have shape (C, N, N), got {bits.shape}")
    if bits.shape[0] < 1:
        raise ValueError("message must contain at least one block")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("message entries must be strictly binary")
    return bits.astype(np.uint8)


def bits_to_signed_gaussian(bits: np.ndarray, magnitude_seed: int) -> np.ndarray:
    """Encode bits as +/-|g| with g a seeded standard-normal draw.

    The sign carries the bit (1 -> positive) and the magnitude is the
    absolute value of the draw, so outputs are marginally standard normal
    for uniform bits and sign() recovers the bit exactly.
    """
    bits = _check_bits(bits)
    draws = gaussian(philox(magnitude_seed), bits.size)
    signs = np.where(bits.reshape(-1) == 1, 1.0, -1.0)
    return (signs * np.abs(draws)).reshape(bits.shape)


def embed(bits: np.ndarray, key: StegoKey, latent_shape) -> np.ndarray:
    """Map message bits into an [F, T] standard-Gaussian noise tensor."""
    bits = _check_bits(bits)
    c, n, _ = bits.shape
    if n != key.block_size:
        raise ValueError(f"message block size {n} does not match key block size {key.block_size}")
    f, t = latent_shape
    total = f * t
    cap = max_blocks(latent_shape, n)
    if c > cap:
        raise CapacityError(
            f"message of {c * n * n} bits exceeds capacity: latent {f}x{t} holds at most "
            f"{cap} blocks of {n}x{n} = {cap * n * n} bits"
        )

    mag_gen = philox(key.magnitude_seed)
    magnitudes = gaussian(mag_gen, c * n * n).reshape(c, n, n)
    signed = np.where(bits == 1, 1.0, -1.0) * np.abs(magnitudes)

    basis = generate_orthogonal(key.matrix_seed, n)
    projected = basis @ signed @ basis.T

    flat = projected.reshape(-1)
    padding = gaussian(mag_gen, total - flat.size)
    full = np.concatenate([flat, padding])

    perm = philox(key.shuffle_seed).permutation(total)
    return full[perm].reshape(f, t)


def extract(noise: np.ndarray, key: StegoKey, blocks: int) -> np.ndarray:
    """Recover message bits from a (possibly perturbed) noise tensor.

    Inverse operations in reverse order: unshuffle, drop padding, undo the
    orthogonal congruence, then threshold the sign of each entry.
    """
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 2:
        raise ValueError(f"noise tensor must be 2-D, got shape {noise.shape}")
    n = key.block_size
    if blocks < 1 or blocks > max_blocks(noise.shape, n):
        raise ValueError(f"block count {blocks} inconsistent with shape {noise.shape} and N={n}")

    total = noise.size
    perm = philox(key.shuffle_seed).permutation(total)
    unshuffled = np.empty(total)
    unshuffled[perm] = noise.reshape(-1)

    payload = unshuffled[: blocks * n * n].reshape(blocks, n, n)
    basis = generate_orthogonal(key.matrix_seed, n)
    recovered = basis.T @ payload @ basis
    return (recovered > 0).astype(np.uint8)


def bit_error_rate(bits: np.ndarray, decoded: np.ndarray) -> float:
    """Fraction of differing entries between two bit arrays."""
    bits = np.asarray(bits)
    decoded = np.asarray(decoded)
    if bits.shape != decoded.shape:
        raise ValueError(f"shape mismatch: {bits.shape} vs {decoded.shape}")
    return float(np.mean(bits != decoded))


def bytes_to_bits(data: bytes, blocks: int, block_size: int) -> np.ndarray:
    """Unpack raw bytes (MSB first) into a (C, N, N) bit array.

    Messages shorter than the payload are zero-padded; trailing bits
    beyond C*N^2 raise CapacityError.
    """
    capacity = blocks * block_size * block_size
    raw = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if raw.size > capacity:
        raise CapacityError(
            f"message of {raw.size} bits exceeds payload of {capacity} bits "
            f"({blocks} blocks of {block_size}x{block_size})"
        )
    padded = np.zeros(capacity, dtype=np.uint8)
    padded[: raw.size] = raw
    return padded.reshape(blocks, block_size, block_size)


def bits_to_bytes(bits: np.ndarray) -> bytes:
    """Pack a bit array MSB-first; the tail is zero-padded to whole bytes."""
    return np.packbits(np.asarray(bits, dtype=np.uint8).reshape(-1)).tobytes()
