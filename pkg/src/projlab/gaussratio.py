"""Exact shared-direction density ratio and the moment functionals built on it.

For k Gaussian-reference slice vectors W_i = x*b + (I - bb')V_i sharing one
uniform direction b, the joint density of (W_1, ..., W_k) relative to the
product of k standard Gaussian densities is a closed form in the scaled Gram
matrix S_k = (w_i'w_j / d):

    ratio(S_k, x) = (d/2)^{-k/2} Gamma(d/2)/Gamma((d-k)/2) det(S_k)^{-1/2}
                    (1 - x^2 iota' S_k^{-1} iota / d)^{(d-k-2)/2} e^{k x^2 / 2}

when S_k is invertible with x^2 iota' S_k^{-1} iota < d, and 0 otherwise.
All evaluation happens in log space (log-gamma, log-det via Cholesky, log1p)
so exponents of order d never overflow.

The Monte Carlo functionals below integrate polynomial statistics of i.i.d.
draws against this ratio; for standardized laws they all tend to zero as the
dimension grows, and for the Gaussian law they are zero exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DistributionSpec, gaussian_log_density, log_density, sample
from .geometry import make_w_batch, sample_direction
from .mc import MonteCarloEstimate, batch_mean_se

__all__ = [
    "GramDeviation",
    "density_ratio",
    "log_density_ratio",
    "ratio_of_gram_batch",
    "marginal_mse",
    "marginal_mse_iid",
    "mean_linearity_gap",
    "chain_moment_gap",
    "cycle_moment_gap",
    "validate_chain_indices",
    "WeightDegeneracyWarning",
]


class WeightDegeneracyWarning(UserWarning):
    """Importance weights collapsed; the estimate is unusable."""


@dataclass(frozen=True)
class GramDeviation:
    """S_k - I_k for k vectors in R^d (entries w_i'w_j/d - delta_ij)."""

    k: int
    s_minus_i: np.ndarray
    d: int

    def __post_init__(self):
        m = np.asarray(self.s_minus_i, dtype=float)
        if m.shape != (self.k, self.k):
            raise ValueError(f"expected ({self.k}, {self.k}) matrix, got {m.shape}")
        if np.max(np.abs(m - m.T)) > 1e-12:
            raise ValueError("Gram deviation must be symmetric within 1e-12")
        if np.min(np.diagonal(m)) < -1.0 - 1e-12:
            raise ValueError("diagonal entries of S_k - I_k cannot be below -1")
        object.__setattr__(self, "s_minus_i", 0.5 * (m + m.T))

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, d: int | None = None) -> "GramDeviation":
        vectors = np.asarray(vectors, dtype=float)
        k = vectors.shape[0]
        d = vectors.shape[1] if d is None else d
        s = vectors @ vectors.T / d
        return cls(k=k, s_minus_i=s - np.eye(k), d=d)


def _log_const(k: int, d: int) -> float:
    return -(k / 2.0) * math.log(d / 2.0) + math.lgamma(d / 2.0) - math.lgamma((d - k) / 2.0)


def log_density_ratio(gram: GramDeviation, x: float) -> float:
    """log of the ratio; -inf where the ratio is defined to be zero."""
    k, d = gram.k, gram.d
    if not 1 <= k < d:
        raise ValueError(f"order k={k} must satisfy 1 <= k < d={d}")
    s = gram.s_minus_i + np.eye(k)
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        return -math.inf
    logdet = 2.0 * float(np.log(np.diagonal(chol)).sum())
    ones = np.ones(k)
    y = np.linalg.solve(chol, ones)
    q = float(y @ y)  # iota' S^{-1} iota
    u = 1.0 - x * x * q / d
    if u <= 0.0:
        return -math.inf
    return (
        _log_const(k, d)
        - 0.5 * logdet
        + ((d - k - 2.0) / 2.0) * math.log1p(-x * x * q / d)
        + 0.5 * k * x * x
    )


def density_ratio(gram: GramDeviation, x: float) -> float:
    """The ratio itself; exactly 0 outside its positivity region."""
    lr = log_density_ratio(gram, x)
    return 0.0 if lr == -math.inf else math.exp(lr)


def ratio_of_gram_batch(s_batch: np.ndarray, x: float, d: int) -> np.ndarray:
    """Vectorized ratio for a batch of Gram matrices S_k of shape (n, k, k).

    Batch members that are singular or fall outside the positivity region
    evaluate to 0, matching the scalar path.
    """
    s_batch = np.asarray(s_batch, dtype=float)
    n, k, k2 = s_batch.shape
    if k != k2:
        raise ValueError("gram batch must be square in its last two axes")
    if not 1 <= k < d:
        raise ValueError(f"order k={k} must satisfy 1 <= k < d={d}")
    if k == 1:
        s11 = s_batch[:, 0, 0]
        ok = s11 > 0.0
        q = np.where(ok, 1.0 / np.where(ok, s11, 1.0), np.inf)
        logdet = np.log(np.where(ok, s11, 1.0))
    else:
        sign, logdet = np.linalg.slogdet(s_batch)
        ok = sign > 0
        q = np.full(n, np.inf)
        if np.any(ok):
            ones = np.ones((int(ok.sum()), k))
            sol = np.linalg.solve(s_batch[ok], ones[..., None])[..., 0]
            q[ok] = sol.sum(axis=1)
    u = 1.0 - x * x * q / d
    valid = ok & (u > 0.0)
    log_ratio = np.where(
        valid,
        _log_const(k, d)
        - 0.5 * logdet
        + ((d - k - 2.0) / 2.0) * np.log1p(np.where(valid, -x * x * q / d, 0.0))
        + 0.5 * k * x * x,
        -np.inf,
    )
    out = np.zeros(n)
    out[valid] = np.exp(log_ratio[valid])
    return out


# ---------------------------------------------------------------------------
# Monte Carlo functionals
# ---------------------------------------------------------------------------


def _chunks(total: int, chunk: int):
    done = 0
    while done < total:
        step = min(chunk, total - done)
        yield done, step
        done += step


def _weights(spec: DistributionSpec, w: np.ndarray) -> np.ndarray:
    """Importance weights f(w)/phi(w), evaluated in log space."""
    lw = log_density(spec, w) - gaussian_log_density(w)
    return np.where(np.isneginf(lw), 0.0, np.exp(lw))


def marginal_mse(
    spec: DistributionSpec,
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
    chunk: int = 20_000,
) -> MonteCarloEstimate:
    """Mean squared deviation from 1 of the slice density h(x|b) over b.

    Sampled exactly in its shared-direction form: one uniform direction b and
    two reference draws per replicate, with summand r1*r2 - 2*r1 + 1 where
    r_i = f(W_i)/phi(W_i).  For the Gaussian law every summand is exactly 0.
    """
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    vals = np.empty(reps)
    sum_r, sum_r2, max_r = 0.0, 0.0, 0.0
    for lo, step in _chunks(reps, chunk):
        b = rng.standard_normal((step, d))
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        v1 = rng.standard_normal((step, d))
        v2 = rng.standard_normal((step, d))
        proj1 = (v1 * b).sum(axis=1, keepdims=True)
        proj2 = (v2 * b).sum(axis=1, keepdims=True)
        w1 = x * b + v1 - proj1 * b
        w2 = x * b + v2 - proj2 * b
        r1 = _weights(spec, w1)
        r2 = _weights(spec, w2)
        vals[lo : lo + step] = r1 * r2 - 2.0 * r1 + 1.0
        sum_r += float(r1.sum())
        sum_r2 += float((r1 * r1).sum())
        max_r = max(max_r, float(r1.max(initial=0.0)))
    est = batch_mean_se(vals)
    n_eff = sum_r * sum_r / sum_r2 if sum_r2 > 0 else 0.0
    degenerate = sum_r <= 0.0 or sum_r / reps < 1e-6 * max_r or n_eff < 100.0
    if degenerate:
        import warnings

        warnings.warn(
            f"importance weights degenerate at d={d}, x={x} "
            f"(weight n_eff={n_eff:.1f}); prefer the i.i.d. ratio form",
            WeightDegeneracyWarning,
            stacklevel=2,
        )
    est.extra["weight_n_eff"] = n_eff
    est.extra["degenerate"] = degenerate
    return est


def marginal_mse_iid(
    spec: DistributionSpec,
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
    chunk: int = 50_000,
) -> MonteCarloEstimate:
    """The same quantity via the i.i.d.-sample density-ratio form.

    E[ratio(S_2, x)] - 2 E[ratio(S_1, x)] + 1 over i.i.d. draws from the law;
    equal to :func:`marginal_mse` in population, with far smaller Monte Carlo
    variance at large d because no importance weights appear.
    """
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    vals = np.empty(reps)
    for lo, step in _chunks(reps, chunk):
        z = sample(spec, 2 * step, rng).reshape(step, 2, d)
        s2 = z @ np.swapaxes(z, 1, 2) / d
        r2 = ratio_of_gram_batch(s2, x, d)
        s1 = s2[:, :1, :1]
        r1a = ratio_of_gram_batch(s1, x, d)
        r1b = ratio_of_gram_batch(s2[:, 1:, 1:], x, d)
        vals[lo : lo + step] = r2 - (r1a + r1b) + 1.0
    return batch_mean_se(vals)


def mean_linearity_gap(
    spec: DistributionSpec,
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
    chunk: int = 50_000,
) -> MonteCarloEstimate:
    """h^2-weighted average of ||E[Z | b'Z=x]||^2 - x^2 over directions.

    Estimated as E[(Z_1'Z_2 - x^2) ratio(S_2, x)] with Z_1, Z_2 i.i.d. from
    the law; identically zero for the Gaussian.
    """
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    vals = np.empty(reps)
    for lo, step in _chunks(reps, chunk):
        z = sample(spec, 2 * step, rng).reshape(step, 2, d)
        inner = (z[:, 0, :] * z[:, 1, :]).sum(axis=1)
        s2 = z @ np.swapaxes(z, 1, 2) / d
        vals[lo : lo + step] = (inner - x * x) * ratio_of_gram_batch(s2, x, d)
    return batch_mean_se(vals)


def validate_chain_indices(l: int, m: int, j_indices: tuple[int, ...]) -> None:
    """Check the chain index pattern, naming the violated constraint."""
    if l < 1:
        raise ValueError("chain constraint violated: l >= 1")
    if m < 0:
        raise ValueError("chain constraint violated: m >= 0")
    if len(j_indices) != m + 1:
        raise ValueError("chain constraint violated: j_indices must have length m+1")
    if j_indices[0] != 0:
        raise ValueError("chain constraint violated: j_0 = 0")
    if j_indices[-1] > l:
        raise ValueError("chain constraint violated: j_m <= l")
    for i in range(1, m + 1):
        if not j_indices[i - 1] + 1 < j_indices[i]:
            raise ValueError("chain constraint violated: j_{i-1}+1 < j_i")


def _chain_product(gram_raw: np.ndarray, j_indices: tuple[int, ...]) -> np.ndarray:
    """Product over blocks of consecutive inner products Z_t'Z_{t+1}.

    ``gram_raw`` holds raw inner products (n, l, l); block i chains indices
    j_{i-1}+1 .. j_i (1-based).
    """
    n = gram_raw.shape[0]
    out = np.ones(n)
    for i in range(1, len(j_indices)):
        lo, hi = j_indices[i - 1] + 1, j_indices[i]
        for t in range(lo, hi):  # 1-based t and t+1 -> 0-based t-1, t
            out *= gram_raw[:, t - 1, t]
    return out


def chain_moment_gap(
    spec: DistributionSpec,
    l: int,
    m: int,
    j_indices: tuple[int, ...],
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
    chunk: int = 50_000,
) -> MonteCarloEstimate:
    """Chained-inner-product moment against the ratio, centered at x^{2(j_m-m)}.

    E[(prod of disjoint chains) ratio(S_l, x)] - x^{2(j_m - m)} over i.i.d.
    draws; m = 0 gives the plain normalization check E[ratio] - 1.
    """
    validate_chain_indices(l, m, tuple(j_indices))
    if l >= spec.d:
        raise ValueError(f"order l={l} must be < d={spec.d}")
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    j_indices = tuple(j_indices)
    center = float(x ** (2 * (j_indices[-1] - m))) if m > 0 else 1.0
    vals = np.empty(reps)
    for lo, step in _chunks(reps, chunk):
        z = sample(spec, l * step, rng).reshape(step, l, d)
        gram_raw = z @ np.swapaxes(z, 1, 2)
        ratio = ratio_of_gram_batch(gram_raw / d, x, d)
        vals[lo : lo + step] = _chain_product(gram_raw, j_indices) * ratio - center
    return batch_mean_se(vals)


def _cycle_values(gram_raw: np.ndarray, j: int) -> np.ndarray:
    """Closed cycle Z_1'Z_2 * Z_2'Z_3 * ... * Z_j'Z_1 (j = 1 gives Z_1'Z_1)."""
    if j == 1:
        return gram_raw[:, 0, 0]
    out = gram_raw[:, 0, 1].copy()
    for t in range(1, j - 1):
        out *= gram_raw[:, t, t + 1]
    out *= gram_raw[:, j - 1, 0]
    return out


def cycle_moment_gap(
    spec: DistributionSpec,
    k: int,
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
    chunk: int = 50_000,
) -> MonteCarloEstimate:
    """Alternating binomial sum of centered cycle moments against the ratio.

    sum_j C(k,j)(-1)^j E[(cycle_j - d) ratio(S_k, x)] - (1 - x^2)^k for even
    k; zero for the Gaussian law at every d and x.
    """
    if k < 2 or k % 2 != 0:
        raise ValueError("cycle functional requires an even order k >= 2")
    if k >= spec.d:
        raise ValueError(f"order k={k} must be < d={spec.d}")
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    center = float((1.0 - x * x) ** k)
    vals = np.empty(reps)
    for lo, step in _chunks(reps, chunk):
        z = sample(spec, k * step, rng).reshape(step, k, d)
        gram_raw = z @ np.swapaxes(z, 1, 2)
        ratio = ratio_of_gram_batch(gram_raw / d, x, d)
        acc = np.zeros(step)
        for j in range(1, k + 1):
            acc += math.comb(k, j) * (-1.0) ** j * (_cycle_values(gram_raw, j) - d)
        vals[lo : lo + step] = acc * ratio - center
    return batch_mean_se(vals)


