"""Purpose-keyed random streams.

Every random draw in the package comes from ``stream(seed, purpose, *keys)``
so that results never depend on call order or on how work is scheduled
across threads.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "permutations": 1,
    "bank": 2,
    "folds": 3,
    "noise": 4,
    "simulate": 5,
    "design": 6,
    "theory": 7,
}


def stream(seed: int | None, purpose: str, *keys: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=(PURPOSES[purpose], *map(int, keys)))
    return np.random.default_rng(ss)


def resolve_seed(random_state) -> int:
    """Map an sklearn-style ``random_state`` to an integer seed."""
    if random_state is None:
        return int(np.random.SeedSequence().entropy % (2**63))
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**63))
    if isinstance(random_state, np.random.RandomState):
        return int(random_state.randint(2**31 - 1))
    return int(random_state)
