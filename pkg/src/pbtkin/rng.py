"""Deterministic joint-space sampling.

Uses the counter-based Philox generator so a (seed, n) pair always yields
the same sample block: sample i depends only on the counter position, not
on execution order, and longer draws extend shorter ones prefix-stably.
"""

from __future__ import annotations

import numpy as np


def uniform_block(seed: int, n: int, lows, highs) -> np.ndarray:
    """(n, d) uniform samples with per-column bounds, reproducible by seed."""
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    u = gen.random((int(n), lows.shape[0]))
    return lows + u * (highs - lows)
