"""Seeded randomness helpers.

All generators draw from numpy's Philox bit generator, a counter-based RNG
whose streams depend only on (seed, counter), never on platform or call
history.  Helpers derive independent child streams from a parent seed and an
integer tag so that adding a draw site never perturbs existing streams.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, tag: int = 0) -> np.random.Generator:
    """Return a deterministic generator for (seed, tag)."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a u64, got {seed}")
    if not 0 <= tag < 2**64:
        raise ValueError(f"tag must be a u64, got {tag}")
    return np.random.Generator(np.random.Philox(key=np.array([seed, tag], dtype=np.uint64)))
