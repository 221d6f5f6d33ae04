"""Seed derivation so that every random stream is reproducible and independent."""

import numpy as np


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Build a PCG64 generator from an integer seed or a seed sequence."""
    return np.random.default_rng(seed)


def child_seed(seed: int, *path: int) -> np.random.SeedSequence:
    """Return the seed sequence addressed by ``path`` below ``seed``."""
    return np.random.SeedSequence(seed, spawn_key=tuple(path))
