"""Deterministic seed-stream derivation.

A single master seed is split into labeled child streams via
``numpy.random.SeedSequence`` spawn keys.  Stream labels keep coefficient
draws, Brownian draws and auxiliary strategy noise on disjoint,
independently derived generators, and the per-path index makes any
chunking of a Monte Carlo run reproduce the exact same numbers path by
path, regardless of thread count or block layout.
"""

from __future__ import annotations

import numpy as np

# Stream labels.  Keep these stable: they are part of the reproducibility
# contract (a result table is only reproducible if path k consumes the
# same child streams).
COEFFICIENT_STREAM = 0
BROWNIAN_STREAM = 1
AUX_STREAM = 2

SeedLike = "int | np.random.SeedSequence"


def child_sequence(master_seed: int, stream: int, index: int = 0) -> np.random.SeedSequence:
    """SeedSequence for child stream (stream, index) of a master seed."""
    return np.random.SeedSequence(master_seed, spawn_key=(stream, index))


def child_rng(master_seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Generator on the (stream, index) child stream of a master seed."""
    return np.random.default_rng(child_sequence(master_seed, stream, index))


def as_seed_sequence(seed, stream: int) -> np.random.SeedSequence:
    """Normalize a user-facing seed argument.

    Integers are treated as master seeds and mapped to the (stream, 0)
    child; SeedSequence instances are taken as-is (already derived).
    """
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return child_sequence(int(seed), stream, 0)
