"""Deterministic text-to-vector hashing used for tests and mock archives.

The construction is fixed so that any implementation, in any language,
produces bit-identical vectors: seed a splitmix64 stream with the
FNV-1a-64 hash of the UTF-8 text, draw one 64-bit value per dimension,
map each to [-1, 1), then L2-normalize.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def splitmix64_stream(seed: int, count: int) -> list[int]:
    """First `count` outputs of the splitmix64 generator seeded at `seed`."""
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
        out.append(z)
    return out


def derive_seed(base: int, label: str) -> int:
    """Sub-seed for a named component: base XOR fnv1a64(label)."""
    return (base ^ fnv1a64(label.encode("utf-8"))) & _MASK64


def mock_embed(text: str, dimension: int) -> np.ndarray:
    """Deterministic unit vector for a text, identical on every platform.

    Pure function of (text, dimension). In the vanishingly unlikely event
    that all drawn components are zero, the seed is bumped by one and the
    draw repeated.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    seed = fnv1a64(text.encode("utf-8"))
    while True:
        draws = splitmix64_stream(seed, dimension)
        # u64 -> [0, 1) -> [-1, 1); float64 keeps the top 53 bits of each draw
        values = np.array([d / 2.0**64 for d in draws], dtype=np.float64)
        vec = values * 2.0 - 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            return vec / norm
        seed = (seed + 1) & _MASK64
