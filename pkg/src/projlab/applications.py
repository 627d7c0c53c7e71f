"""Consequence demos: inverse-moment direction recovery and sparse submodels.

Sliced inverse regression recovers a single index direction from first
inverse moments and needs linear conditional means; sliced average variance
estimation uses second inverse moments and additionally needs constant
conditional variances.  The sparse-submodel check regresses a full linear
model onto one coordinate and compares the fitted slope against the
population projection coefficient c = Cov[theta'w, w_1] / Var[w_1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSpec, sample
from .estimators import estimate_slicing
from .geometry import Direction

__all__ = [
    "SparseModelCase",
    "sir_estimate",
    "save_estimate",
    "sparse_submodel_check",
    "simulate_link_response",
    "alignment",
]

LINKS = ("linear", "cubic", "square")


@dataclass(frozen=True)
class SparseModelCase:
    """A full linear model y = theta'w + eps with w = M Z, M symmetric PD."""

    theta: np.ndarray
    m_root: np.ndarray  # symmetric PD square root of Cov(w)
    link: str = "linear"
    noise_sd: float = 0.2

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        m = np.asarray(self.m_root, dtype=float)
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        if np.linalg.norm(theta) == 0.0:
            raise ValueError("theta must be nonzero")
        if m.shape != (theta.size, theta.size):
            raise ValueError("m_root shape must match theta")
        if np.max(np.abs(m - m.T)) > 1e-10:
            raise ValueError("m_root must be symmetric")
        if np.linalg.eigvalsh(m).min() <= 1e-8:
            raise ValueError("m_root must be positive definite (min eigenvalue > 1e-8)")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "m_root", m)

    @property
    def d(self) -> int:
        return self.theta.size


def alignment(v: np.ndarray, beta: np.ndarray) -> float:
    """|<v, beta>| / (||v|| ||beta||)."""
    v = np.asarray(v, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return float(abs(v @ beta) / (np.linalg.norm(v) * np.linalg.norm(beta)))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def _slice_rows(y: np.ndarray, n_slices: int):
    n = y.size
    order = np.argsort(y, kind="stable")
    bounds = np.linspace(0, n, n_slices + 1).astype(int)
    return [order[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def sir_estimate(samples_y: np.ndarray, samples_z: np.ndarray, n_slices: int = 10) -> np.ndarray:
    """Top eigenvector of the between-slice covariance of slice means of Z.

    Sign fixed so the first nonzero coordinate is positive.
    """
    y = np.asarray(samples_y, dtype=float).ravel()
    z = np.asarray(samples_z, dtype=float)
    n, d = z.shape
    if y.size != n:
        raise ValueError("samples_y and samples_z must have matching length")
    if n < 10 * n_slices:
        raise ValueError(f"need n >= 10*n_slices, got n={n}, n_slices={n_slices}")
    if np.max(y) == np.min(y):
        raise ValueError("degenerate response: all y equal")
    rows = _slice_rows(y, n_slices)
    means = [z[r].mean(axis=0) for r in rows]
    weights = [r.size / n for r in rows]
    # grand mean from slice means: deterministic given the sorted partition
    grand = np.sum([w * m for w, m in zip(weights, means)], axis=0)
    between = np.zeros((d, d))
    for w, m in zip(weights, means):
        mc = m - grand
        between += w * np.outer(mc, mc)
    vals, vecs = np.linalg.eigh(between)
    return _fix_sign(vecs[:, -1])


def save_estimate(samples_y: np.ndarray, samples_z: np.ndarray, n_slices: int = 10) -> np.ndarray:
    """Top eigenvector of sum_s w_s (I - Cov_s)^2 with slice-proportion weights."""
    y = np.asarray(samples_y, dtype=float).ravel()
    z = np.asarray(samples_z, dtype=float)
    n, d = z.shape
    if y.size != n:
        raise ValueError("samples_y and samples_z must have matching length")
    if n < 10 * n_slices:
        raise ValueError(f"need n >= 10*n_slices, got n={n}, n_slices={n_slices}")
    if np.max(y) == np.min(y):
        raise ValueError("degenerate response: all y equal")
    rows = _slice_rows(y, n_slices)
    eye = np.eye(d)
    acc = np.zeros((d, d))
    for r in rows:
        zc = z[r] - z[r].mean(axis=0)
        cov = zc.T @ zc / r.size
        gap = eye - cov
        acc += (r.size / n) * (gap @ gap)
    vals, vecs = np.linalg.eigh(acc)
    return _fix_sign(vecs[:, -1])


def simulate_link_response(
    z: np.ndarray, beta: np.ndarray, link: str, noise_sd: float, rng: np.random.Generator
) -> np.ndarray:
    """y = link(beta'Z) + noise_sd * N(0,1)."""
    t = z @ np.asarray(beta, dtype=float)
    if link == "linear":
        signal = t
    elif link == "cubic":
        signal = t**3
    elif link == "square":
        signal = t**2
    else:
        raise ValueError(f"link must be one of {LINKS}")
    return signal + noise_sd * rng.standard_normal(t.size)


@dataclass(frozen=True)
class SparseCheckResult:
    c_hat: float
    c_se: float
    c_theory: float
    x_grid: np.ndarray
    residual_mean: np.ndarray
    residual_mean_se: np.ndarray
    residual_var: np.ndarray
    residual_var_se: np.ndarray


def sparse_submodel_check(
    case: SparseModelCase,
    spec: DistributionSpec,
    n: int,
    rng: np.random.Generator,
    n_slices: int = 20,
) -> SparseCheckResult:
    """Fit y = c*w_1 + e by least squares and profile the residual moments.

    c_theory = Cov[theta'w, w_1] / Var[w_1] computed from M and theta;
    the residual curves are slicing estimates of E[e | w_1 = x] and
    Var[e | w_1 = x] over the conditioning grid.
    """
    if case.link != "linear":
        raise ValueError("sparse submodel check is defined for the linear link")
    if spec.d != case.d:
        raise ValueError("spec dimension must match the case")
    z = sample(spec, n, rng)
    w = z @ case.m_root  # rows w_i = M z_i (M symmetric)
    y = w @ case.theta + case.noise_sd * rng.standard_normal(n)
    w1 = w[:, 0]
    var_w1 = float(w1 @ w1) / n
    c_hat = float(w1 @ y) / n / var_w1
    e = y - c_hat * w1
    # OLS slope SE (no intercept; w is centered in population)
    c_se = math.sqrt(float(e @ e) / max(n - 1, 1) / (n * var_w1))
    m2 = case.m_root @ case.m_root
    c_theory = float(case.theta @ m2[:, 0]) / float(m2[0, 0])

    order = np.argsort(w1, kind="stable")
    bounds = np.linspace(0, n, n_slices + 1).astype(int)
    x_grid = np.empty(n_slices)
    rmean = np.empty(n_slices)
    rmean_se = np.empty(n_slices)
    rvar = np.empty(n_slices)
    rvar_se = np.empty(n_slices)
    for s in range(n_slices):
        rows = order[bounds[s] : bounds[s + 1]]
        es = e[rows]
        ns = rows.size
        x_grid[s] = w1[rows].mean()
        rmean[s] = es.mean()
        rmean_se[s] = es.std(ddof=1) / math.sqrt(ns)
        centered = es - es.mean()
        sq = centered * centered
        rvar[s] = sq.sum() / (ns - 1)
        rvar_se[s] = sq.std(ddof=1) / math.sqrt(ns)
    return SparseCheckResult(
        c_hat=c_hat,
        c_se=c_se,
        c_theory=c_theory,
        x_grid=x_grid,
        residual_mean=rmean,
        residual_mean_se=rmean_se,
        residual_var=rvar,
        residual_var_se=rvar_se,
    )
