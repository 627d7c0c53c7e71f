"""Reproducible, splittable random streams.

All randomness in the package flows through numpy Generators derived from a
single 64-bit root seed via SeedSequence spawn keys.  A substream is addressed
by a path of small integers (e.g. subcommand -> dimension index -> direction
index -> replicate block), so parallel workers draw non-overlapping streams
whose output does not depend on scheduling order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["task_rng", "task_seedseq", "split_rng"]


def task_seedseq(seed: int, *path: int) -> np.random.SeedSequence:
    """SeedSequence for the substream addressed by ``path`` under ``seed``."""
    return np.random.SeedSequence(seed, spawn_key=tuple(path))


def task_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream addressed by ``path`` under ``seed``."""
    return np.random.default_rng(task_seedseq(seed, *path))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``n`` child generators off an existing generator.

    Deterministic given the generator's own seed sequence; children are
    independent of each other and of the parent's future output.
    """
    return [np.random.default_rng(ss) for ss in rng.bit_generator.seed_seq.spawn(n)]
