"""Seed derivation helpers.

All randomness in the library flows through counter-based Philox generators
keyed by a user seed plus a structural stream tag, so that independent
components (chain terms, repetitions, workers) draw from non-overlapping
streams and every run is exactly reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for `seed`, isolated by the integer `stream` tags."""
    ss = np.random.SeedSequence(entropy=seed & _MASK64, spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *stream: int) -> int:
    """Stable 63-bit child seed for handing to components that reseed themselves."""
    ss = np.random.SeedSequence(entropy=seed & _MASK64, spawn_key=tuple(stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
