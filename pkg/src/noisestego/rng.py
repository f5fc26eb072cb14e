"""Deterministic randomness helpers.

All randomness in the package flows through a counter-based Philox4x64
generator so that streams are reproducible from 64-bit seeds and
independent streams can be derived by hashing role strings into fresh
seeds.  Gaussian draws use an explicit Box-Muller transform (never the
ziggurat) so the exact doubles produced for a given seed are part of the
documented format contract.
"""

from __future__ import annotations

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def derive_seed(*parts) -> int:
    """Derive a 64-bit sub-stream seed from a tuple of ints/strings."""
    text = "/".join(str(p) for p in parts)
    return fnv1a64(text.encode("utf-8"))


def philox(seed: int) -> np.random.Generator:
    """Counter-based generator for the given 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def gaussian(gen: np.random.Generator, size: int) -> np.ndarray:
    """Standard-normal draws via Box-Muller on Philox uniforms.

    Consumes 2*ceil(size/2) uniforms; the pairing is fixed so identical
    seeds always yield identical doubles.
    """
    pairs = (size + 1) // 2
    # 1 - U keeps the log argument in (0, 1].
    u1 = 1.0 - gen.random(pairs)
    u2 = gen.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:size]


def seeded_gaussian(seed: int, size: int) -> np.ndarray:
    return gaussian(philox(seed), size)


def permutation(seed: int, n: int) -> np.ndarray:
    """Keyed Fisher-Yates permutation of range(n)."""
    return philox(seed).permutation(n)
