"""Independent RNG streams derived from one master seed.

Each concern gets its own generator so that switching a feature on or
off (say, the attack) never shifts the draws of another concern.
"""

from __future__ import annotations

import numpy as np

CONCERNS = {
    "weights": 1,
    "explore": 2,
    "fading": 3,
    "perturb": 4,
    "attack": 5,
    "replay": 6,
    "policy": 7,
}


def stream(seed: int, concern: str, *extra: int) -> np.random.Generator:
    if concern not in CONCERNS:
        raise KeyError(f"unknown RNG concern {concern!r}")
    if seed < 0:
        raise ValueError("seed must be >= 0")
    return np.random.default_rng([int(seed), CONCERNS[concern], *map(int, extra)])
