"""Deterministic random-stream derivation.

All randomness in the package flows through numpy Generators whose seeds are
derived from a master seed plus a path of integer indices (realization index,
scenario index, named stream).  Two processes deriving the same path get the
same stream, which is what makes fan-out sweeps reproducible regardless of
scheduling order.
"""

from __future__ import annotations

import numpy as np

# Named stream offsets, so different pipeline stages never share a stream.
STREAM_MODEL = 0
STREAM_SCENARIOS = 1
STREAM_NOISE = 2
STREAM_CHAIN = 3
STREAM_PREDICTIVE = 4


def seed_sequence(master_seed: int, *path: int) -> np.random.SeedSequence:
    """SeedSequence for ``master_seed`` refined by a path of integers."""
    return np.random.SeedSequence(entropy=(int(master_seed), *map(int, path)))


def make_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Independent PCG64 generator for the given seed path."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *path)))


def derive_seed(master_seed: int, *path: int) -> int:
    """Collision-resistant integer seed for the given path.

    Lets sweep realizations hand a plain ``seed`` int to stage functions
    (which route it through their own named streams) while staying
    independent across realizations.
    """
    return int(seed_sequence(master_seed, *path).generate_state(1, np.uint64)[0])
