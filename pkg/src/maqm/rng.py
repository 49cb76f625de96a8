"""Counter-based RNG stream derivation.

Every random draw in a run comes from a stream keyed by
``(master seed, stream id, index)``, so results never depend on how work is
split across processes.
"""

from __future__ import annotations

import numpy as np

STREAMS = {"shot": 0, "bootstrap": 1, "counts": 2, "sweep": 3, "calibration": 4}


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return int(seed)


def rng_for(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(STREAMS[stream], int(index)))
    return np.random.Generator(np.random.PCG64(ss))
