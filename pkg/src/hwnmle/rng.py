"""Seeded random streams.

All randomness goes through NumPy's PCG64 bit generator.  Independent
streams for replications, multi-starts and Monte Carlo partitions are
derived by hashing ``(base_seed, *key)`` with :class:`numpy.random.SeedSequence`,
so a replication's stream does not depend on how many others ran before it
or on which thread runs it.  Normal variates use the Box-Muller transform
on the generator's uniforms.
"""
from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "derive_rng", "standard_normal"]

MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & MASK64)))


def derive_rng(base_seed: int, *key: int) -> np.random.Generator:
    """Child stream identified by ``key`` (e.g. a replication index)."""
    ss = np.random.SeedSequence(int(base_seed) & MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """I.i.d. N(0, 1) draws by Box-Muller."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape))
    pairs = (count + 1) // 2
    u = rng.random((pairs, 2))
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))  # 1 - u in (0, 1]
    angle = 2.0 * np.pi * u[:, 1]
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:count].reshape(shape)
