"""Counter-based random number generation.

All randomness in the package flows through Philox streams keyed by a 64-bit
seed.  Parallel work units (Monte Carlo trials, random distributions in a
sweep) use ``stream_rng(seed, index)`` so results never depend on scheduling.
"""
from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox"


def make_rng(seed: int) -> np.random.Generator:
    """Root generator for a run."""
    return np.random.Generator(np.random.Philox(key=seed))


def stream_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for work unit ``index`` of a run keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed).jumped(index))
