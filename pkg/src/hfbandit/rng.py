"""Counter-based random streams keyed by (master_seed, n, trial).

Every Monte Carlo cell gets its own Philox stream derived from a
``SeedSequence`` whose spawn key is the cell coordinates, so results do not
depend on execution order or worker count.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def cell_seed(master_seed: int, *key: int) -> int:
    """64-bit seed derived from ``master_seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(master_seed) & MASK64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & MASK64))


def cell_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the cell identified by ``key``."""
    return stream_from_seed(cell_seed(master_seed, *key))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
