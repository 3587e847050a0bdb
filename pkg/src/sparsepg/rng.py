"""Deterministic random streams.

All stochastic operations draw from counter-based Philox generators keyed by
(seed, subkey...), so results are reproducible bit-for-bit across platforms
and independent of scheduling.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *subkeys: int) -> np.random.Generator:
    """Independent generator for the given seed and subkey path."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in subkeys))
    return np.random.Generator(np.random.Philox(seq))
