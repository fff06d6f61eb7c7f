"""
Seeded random streams.

Every random draw in the package comes from a PCG64 generator built from a
``SeedSequence``. Substreams are addressed by a path of non-negative integers
(chunk index, grid index, temperature index ...), so how work is partitioned
or scheduled never changes the numbers it sees.
"""

from typing import Tuple

import numpy as np

from ..core.errors import DomainError

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise DomainError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if seed < 0 or seed > MAX_SEED:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def seed_sequence(seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(p) for p in path))


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream ``path`` under root ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *path)))


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit integer seed for a substream, for APIs that take plain seeds."""
    state = seed_sequence(seed, *path).generate_state(1, dtype=np.uint64)
    return int(state[0])


def chunk_bounds(total: int, chunk_size: int) -> Tuple[Tuple[int, int], ...]:
    """Fixed partition of ``range(total)`` into chunks of ``chunk_size``."""
    return tuple((start, min(start + chunk_size, total)) for start in range(0, total, chunk_size))
