"""Deviation functionals of conditional moments and the spectral-norm primitive.

For a direction beta and conditioning value x the two deviations are

    d1(x) = ||E[Z | beta'Z = x]||^2 - x^2
    d2(x) = || E[ZZ' | beta'Z = x] - (I + (x^2 - 1) beta beta') ||   (operator norm)

Both vanish for every x exactly when the conditional mean is linear and the
conditional variance is constant; the empirical question is how close to zero
they are for most directions once the dimension is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import ConditionalMomentEstimate
from .geometry import Direction

__all__ = [
    "spectral_norm",
    "SpectralNormError",
    "deviation_d1",
    "deviation_d2",
    "DeviationReport",
    "build_report",
    "exceedance_at_points",
]

_POWER_SEED = 0x5EED  # fixed start vector; spectral_norm must be deterministic
_MAX_ITER = 20_000


class SpectralNormError(RuntimeError):
    """Power iteration failed to converge; carries the current bracket."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(message)
        self.bracket = bracket


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric within 1e-8")
    return 0.5 * (m + m.T)


def _start_vector(n: int) -> np.ndarray:
    v = np.random.default_rng(_POWER_SEED).standard_normal(n)
    return v / np.linalg.norm(v)


def _power_squared(a: np.ndarray, tol: float):
    """Power iteration on a@a for the largest |eigenvalue| of symmetric a.

    Squaring makes the operator PSD with top eigenvalue ||a||^2, so no shift
    is needed and the sign ambiguity between lambda_max and lambda_min
    disappears (a shift as large as a norm bound would also slow convergence
    by orders of magnitude on dense noise matrices).  Stops once the Rayleigh
    residual certifies relative error tol on the square root, floored at a
    few ulps.  Returns (norm_estimate, error_bound, vector, converged).
    """
    n = a.shape[0]
    v = _start_vector(n)
    scale = float(np.linalg.norm(a, ord="fro"))
    if scale == 0.0:
        return 0.0, 0.0, v, True
    theta, resid = 0.0, math.inf
    floor = 5e-15 * scale * scale
    converged = False
    for _ in range(_MAX_ITER):
        bv = a @ (a @ v)  # one squared-operator action per iteration
        theta = float(v @ bv)  # Rayleigh estimate of ||a||^2 at current v
        resid = float(np.linalg.norm(bv - theta * v))
        norm = np.linalg.norm(bv)
        if norm == 0.0:
            if theta == 0.0 and resid == 0.0:
                v = np.roll(v, 1)  # deterministic kernel restart
                continue
            return 0.0, 0.0, v, True
        v = bv / norm
        if resid <= max(2.0 * tol * theta, floor):
            converged = True
            break
    est = math.sqrt(max(theta, 0.0))
    err = resid / max(2.0 * est, 1e-300)
    return est, err, v, converged


def spectral_norm(m: np.ndarray, tol: float = 1e-10) -> float:
    """Largest absolute eigenvalue of a symmetric matrix.

    Deterministic-start power iteration on the squared operator with a
    Rayleigh-residual convergence certificate (no deflation); raises
    :class:`SpectralNormError` with the current bracket if the certificate
    cannot reach ``tol`` within the iteration cap.
    """
    a = _check_symmetric(m)
    if a.shape[0] == 1:
        return abs(float(a[0, 0]))
    est, err, _, ok = _power_squared(a, tol)
    if not ok:
        raise SpectralNormError(
            f"power iteration did not converge (error bound {err:.2e})",
            bracket=(max(est - err, 0.0), est + err),
        )
    return est


def _spectral_norm_vec(m: np.ndarray, tol: float) -> tuple[float, np.ndarray]:
    """Spectral norm plus a vector spanning the extreme eigendirection."""
    a = _check_symmetric(m)
    if a.shape[0] == 1:
        return abs(float(a[0, 0])), np.ones(1)
    est, _, v, _ = _power_squared(a, tol)
    return est, v


def spectral_norm_batch(mats: np.ndarray, tol: float = 1e-9, max_iter: int = 2000) -> np.ndarray:
    """Vectorized spectral norms for a batch of small symmetric matrices.

    Same squared-operator power iteration as :func:`spectral_norm`, run on
    all batch members simultaneously; intended for k x k Gram deviations
    with k <= 8.
    """
    mats = np.asarray(mats, dtype=float)
    b, n, _ = mats.shape
    if n == 1:
        return np.abs(mats[:, 0, 0])
    a = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    b2 = a @ a
    scale2 = np.einsum("bij,bij->b", a, a)  # Frobenius^2
    v = np.broadcast_to(_start_vector(n), (b, n)).copy()
    theta = np.zeros(b)
    floor = 5e-15 * scale2
    for _ in range(max_iter):
        av = np.einsum("bij,bj->bi", b2, v)
        norm = np.linalg.norm(av, axis=1)
        ok = norm > 0
        v = np.where(ok[:, None], av / np.where(ok, norm, 1.0)[:, None], np.roll(v, 1, axis=1))
        av2 = np.einsum("bij,bj->bi", b2, v)
        theta = (v * av2).sum(axis=1)
        resid = np.linalg.norm(av2 - theta[:, None] * v, axis=1)
        live = resid > np.maximum(2.0 * tol * theta, floor)
        if not live.any():
            break
    return np.sqrt(np.maximum(theta, 0.0))


# ---------------------------------------------------------------------------
# deviation functionals
# ---------------------------------------------------------------------------


def deviation_d1(est: ConditionalMomentEstimate):
    """Per-x d1 = ||mu_hat||^2 - x^2 with bias correction and SE.

    ||mu_hat||^2 overestimates ||mu||^2 by trace Cov(mu_hat); the plug-in
    (equivalently, delete-one jackknife) estimate of that trace is subtracted.
    The SE combines the delta-method first-order term with the second-order
    chi-square term that dominates under the null.
    """
    n_x = len(est.x_grid)
    d1 = np.full(n_x, np.nan)
    se = np.full(n_x, np.nan)
    beta = est.beta.beta
    for i in np.flatnonzero(est.defined):
        m = est.mu_hat[i]
        m2 = est.m2_hat[i]
        n = float(est.n_eff[i])
        xbar = float(est.x_grid[i])
        norm2 = float(m @ m)
        tr_m2 = float(np.trace(m2))
        trace_cov = max(tr_m2 - norm2, 0.0) / max(n - 1.0, 1.0)
        d1[i] = norm2 - xbar * xbar - trace_cov
        norm = math.sqrt(norm2)
        u = m / norm if norm > 1e-12 else beta
        var_t = max(float(u @ m2 @ u) - float(u @ m) ** 2, 0.0)
        var_x = max(float(beta @ m2 @ beta) - xbar * xbar, 0.0)
        cov_tx = float(u @ m2 @ beta) - float(u @ m) * xbar
        first = (
            4.0 * norm2 * var_t
            + 4.0 * xbar * xbar * var_x
            - 8.0 * norm * xbar * cov_tx
        ) / n
        # ||Cov||_F^2 without forming the covariance matrix
        frob2 = max(
            float((m2 * m2).sum()) - 2.0 * float(m @ m2 @ m) + norm2 * norm2, 0.0
        )
        second = 2.0 * frob2 / (n * n)
        se[i] = math.sqrt(max(first, 0.0) + second)
    return d1, se


def deviation_d2(
    est: ConditionalMomentEstimate,
    beta: Direction,
    tol: float = 1e-10,
    with_se: bool = True,
):
    """Per-x d2 = ||m2_hat - (I + (x^2-1) beta beta')|| with jackknife SE.

    The SE deletes round-robin blocks (of slice members, or of weighted
    reference draws) and re-evaluates the deviation along the extreme
    eigenvector of the full estimate, which is the first-order jackknife.
    ``with_se=False`` skips the jackknife pass (sweeps that never report SEs).
    """
    n_x = len(est.x_grid)
    d = est.mu_hat.shape[1]
    b = beta.beta
    d2 = np.full(n_x, np.nan)
    se = np.full(n_x, np.nan)
    vecs = np.zeros((n_x, d))
    eye = np.eye(d)
    for i in np.flatnonzero(est.defined):
        xbar = float(est.x_grid[i])
        delta = est.m2_hat[i] - eye - (xbar * xbar - 1.0) * np.outer(b, b)
        d2[i], vecs[i] = _spectral_norm_vec(delta, tol)
    ctx = est.jackknife if with_se else None
    if ctx is not None:
        counts, s1, s2 = ctx.block_projection_stats(vecs)
        tot_n = counts.sum(axis=1)
        tot_s2 = s2.sum(axis=1)
        for i in np.flatnonzero(est.defined):
            if tot_n[i] <= 0:
                continue
            v = vecs[i]
            xbar = float(est.x_grid[i])
            target = 1.0 + (xbar * xbar - 1.0) * float(b @ v) ** 2
            keep = counts[i] > 0
            n_b = int(keep.sum())
            if n_b < 2:
                continue
            q_minus = (tot_s2[i] - s2[i][keep]) / (tot_n[i] - counts[i][keep])
            pseudo = np.abs(q_minus - target)
            se[i] = math.sqrt(max((n_b - 1) / n_b * ((pseudo - pseudo.mean()) ** 2).sum(), 0.0))
    return d2, se


# ---------------------------------------------------------------------------
# per-direction report
# ---------------------------------------------------------------------------


@dataclass
class DeviationReport:
    """Deviation curves for one direction plus exceedance indicators.

    ``exceed_grid`` maps each threshold pair to 0/1 indicators of a sup-grid
    exceedance; ``exceed_random`` maps it to the fraction of random
    conditioning draws (x = beta'Z) whose deviation exceeds the threshold.
    """

    beta: Direction
    x: np.ndarray
    d1: np.ndarray
    se_d1: np.ndarray
    d2: np.ndarray
    se_d2: np.ndarray
    sup_d1: float
    sup_d2: float
    exceed_grid: dict
    exceed_random: dict
    n_eff_min: float
    d1_negative_flags: np.ndarray

    def recompute_sup(self, x_range: float) -> tuple[float, float]:
        keep = np.isfinite(self.d1) & (np.abs(self.x) <= x_range)
        sup1 = float(np.max(self.d1[keep])) if keep.any() else float("nan")
        keep2 = np.isfinite(self.d2) & (np.abs(self.x) <= x_range)
        sup2 = float(np.max(self.d2[keep2])) if keep2.any() else float("nan")
        return sup1, sup2


def exceedance_at_points(
    est: ConditionalMomentEstimate,
    d1: np.ndarray,
    d2: np.ndarray,
    x_points: np.ndarray,
    thresholds: list[tuple[float, float]],
) -> dict:
    """Fraction of conditioning draws whose slice deviation exceeds each threshold."""
    idx = est.slice_of(np.asarray(x_points, dtype=float))
    out = {}
    for eps1, eps2 in thresholds:
        v1 = d1[idx]
        v2 = d2[idx]
        ok = np.isfinite(v1)
        f1 = float(np.mean(v1[ok] > eps1)) if ok.any() else float("nan")
        ok2 = np.isfinite(v2)
        f2 = float(np.mean(v2[ok2] > eps2)) if ok2.any() else float("nan")
        out[(eps1, eps2)] = (f1, f2)
    return out


def build_report(
    est: ConditionalMomentEstimate,
    thresholds: list[tuple[float, float]],
    x_range: float = 2.5,
    random_x: np.ndarray | None = None,
    d2_tol: float = 1e-10,
) -> DeviationReport:
    """Assemble the per-direction deviation report from one estimate."""
    d1, se1 = deviation_d1(est)
    d2, se2 = deviation_d2(est, est.beta, tol=d2_tol)
    keep = np.isfinite(d1) & (np.abs(est.x_grid) <= x_range)
    sup1 = float(np.max(d1[keep])) if keep.any() else float("nan")
    keep2 = np.isfinite(d2) & (np.abs(est.x_grid) <= x_range)
    sup2 = float(np.max(d2[keep2])) if keep2.any() else float("nan")
    exceed_grid = {
        (e1, e2): (float(sup1 > e1), float(sup2 > e2)) for e1, e2 in thresholds
    }
    exceed_random = (
        exceedance_at_points(est, d1, d2, random_x, thresholds)
        if random_x is not None
        else {}
    )
    flags = np.zeros(len(d1), dtype=bool)
    ok = np.isfinite(d1) & np.isfinite(se1)
    flags[ok] = d1[ok] < -4.0 * se1[ok]
    n_eff_min = float(np.min(est.n_eff[est.defined])) if est.defined.any() else 0.0
    return DeviationReport(
        beta=est.beta,
        x=est.x_grid.copy(),
        d1=d1,
        se_d1=se1,
        d2=d2,
        se_d2=se2,
        sup_d1=sup1,
        sup_d2=sup2,
        exceed_grid=exceed_grid,
        exceed_random=exceed_random,
        n_eff_min=n_eff_min,
        d1_negative_flags=flags,
    )
