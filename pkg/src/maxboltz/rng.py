"""Seed derivation.

Every random stream in the package descends from one integer root seed.  A
task is identified by a tuple of small integers (chunk index, level index,
...), and its stream is ``SeedSequence(root, spawn_key=task)``, so a task
draws the same numbers whether it runs alone or inside a larger batch.
"""
from __future__ import annotations

import numpy as np


def task_rng(seed: int, *task: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(task))))


def child_seed(rng: np.random.Generator) -> int:
    """Integer seed for a numba kernel, drawn from a caller-owned stream."""
    return int(rng.integers(0, 2**31 - 1))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
