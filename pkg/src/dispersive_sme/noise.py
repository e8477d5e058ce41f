"""Seeded Wiener increments.

The stream is frozen: raw 64-bit outputs of NumPy's ``PCG64`` bit generator
seeded with ``SeedSequence(seed)`` are turned into uniforms with 53-bit
resolution and mapped to standard normals by the Box-Muller transform (pairs
``(u1, u2)`` give ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``). NumPy keeps
bit-generator streams stable across releases, unlike its ``Generator``
distribution methods, so this sequence only depends on the seed.
"""

from __future__ import annotations

import math

import numpy as np

ALGORITHM = "pcg64-boxmuller-v1"
_U53 = 2.0**-53


class NoiseSource:
    """Deterministic Gaussian increment generator ``dw ~ Normal(0, dt)``."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed

    def __repr__(self):
        return f"NoiseSource(seed={self.seed})"

    def standard_normals(self, n: int) -> np.ndarray:
        n = int(n)
        pairs = (n + 1) // 2
        raw = np.random.PCG64(self.seed).random_raw(2 * pairs)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _U53  # (0, 1]
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _U53  # [0, 1)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * math.pi * u2)
        z[1::2] = r * np.sin(2.0 * math.pi * u2)
        return z[:n]

    def increments(self, steps: int, dt: float) -> np.ndarray:
        return math.sqrt(dt) * self.standard_normals(steps)


def coarsen(dw: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments: the same Brownian path on a coarser grid."""
    factor = int(factor)
    if len(dw) % factor:
        raise ValueError(f"{len(dw)} increments cannot be grouped by {factor}")
    return np.asarray(dw).reshape(-1, factor).sum(axis=1)
