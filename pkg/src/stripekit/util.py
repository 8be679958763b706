"""Small shared helpers: seeded RNG handling and config parsing."""

from __future__ import annotations

from typing import Iterable

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Coerce a seed-like value to a numpy Generator.

    Accepts an int, a sequence of ints, a SeedSequence, an existing
    Generator (returned as-is), or None (fresh OS entropy).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(seed)


def spawn_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """Derive ``n`` independent child seed sequences from one root seed."""
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(seed)
    return root.spawn(n)


class ConfigError(ValueError):
    """Raised for malformed configuration data (unknown keys, bad values)."""


def check_keys(d: dict, allowed: Iterable[str], where: str) -> None:
    """Reject unknown keys so config typos fail loudly."""
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
