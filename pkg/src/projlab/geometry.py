"""Directions on the unit sphere and the Gaussian-reference slice variable.

``make_w`` maps a standard Gaussian draw V to x*beta + (I - beta beta')V,
whose projection on beta equals x exactly; its law is the conditional-slice
reference N(x*beta, I - beta beta').
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Direction", "sample_direction", "make_w", "make_w_batch"]


@dataclass(frozen=True)
class Direction:
    """A unit vector in R^d."""

    beta: np.ndarray
    d: int

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        norm = float(np.linalg.norm(beta))
        if norm < 1e-8:
            raise ValueError("direction vector too close to zero to normalize")
        object.__setattr__(self, "beta", beta / norm)
        object.__setattr__(self, "d", beta.size)


def sample_direction(d: int, rng: np.random.Generator) -> Direction:
    """Uniform direction on the unit sphere (normalized Gaussian draw)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    v = rng.standard_normal(d)
    while np.linalg.norm(v) < 1e-8:  # probability ~0; avoids blowup
        v = rng.standard_normal(d)
    return Direction(v, d)


def make_w(beta: Direction, x: float, v: np.ndarray) -> np.ndarray:
    """x*beta + (I - beta beta')v using two inner products, O(d) per draw."""
    b = beta.beta
    v = np.asarray(v, dtype=float)
    return x * b + v - b * float(b @ v)


def make_w_batch(beta: Direction, x: float, v: np.ndarray) -> np.ndarray:
    """Vectorized make_w for v of shape (n, d)."""
    b = beta.beta
    v = np.asarray(v, dtype=float)
    return x * b + v - np.outer(v @ b, b)
