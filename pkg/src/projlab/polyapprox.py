"""Degree-k polynomial approximation of the shared-direction density ratio.

The exact ratio is an analytic function of the Gram deviation E = S_k - I_k
in a neighborhood of E = 0.  Its degree-k Taylor polynomial in the k(k+1)/2
distinct entries of E is computed mechanically with truncated multivariate
polynomial arithmetic ("jets"): determinant, Neumann series for S^{-1} iota,
and log/exp composition, all exact to rounding at truncation order k.  The
remainder is O(||E||^{k+1}) on the validity region ||E|| < 1/(2k).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .distributions import DistributionSpec, sample
from .gaussratio import (
    GramDeviation,
    _log_const,
    ratio_of_gram_batch,
    validate_chain_indices,
    _chain_product,
    _cycle_values,
)
from .mc import MonteCarloEstimate, batch_mean_se
from .momentlab import MonomialSpec

__all__ = [
    "RatioPolynomial",
    "build_psi",
    "psi_eval",
    "psi_eval_batch",
    "poly_error_moment",
    "chain_moment_gap_poly",
    "cycle_moment_gap_poly",
    "export_coefficients_csv",
]


# ---------------------------------------------------------------------------
# truncated multivariate polynomial arithmetic over a fixed monomial basis
# ---------------------------------------------------------------------------


class _JetContext:
    """Shared basis and multiplication table for (n_vars, order)."""

    def __init__(self, n_vars: int, order: int):
        self.n_vars = n_vars
        self.order = order
        basis = []
        for total in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(n_vars), total):
                expo = [0] * n_vars
                for v in combo:
                    expo[v] += 1
                basis.append(tuple(expo))
        basis.sort()  # lexicographic on exponent tuples; evaluation order is fixed
        self.basis = basis
        self.size = len(basis)
        self.index = {e: i for i, e in enumerate(basis)}
        self.degrees = np.array([sum(e) for e in basis])
        # multiplication table: all pairs with combined degree within order
        ii, jj, oo = [], [], []
        for i, ei in enumerate(basis):
            di = sum(ei)
            for j, ej in enumerate(basis):
                if di + sum(ej) > order:
                    continue
                prod = tuple(a + b for a, b in zip(ei, ej))
                ii.append(i)
                jj.append(j)
                oo.append(self.index[prod])
        self._mi = np.array(ii)
        self._mj = np.array(jj)
        self._mo = np.array(oo)
        # evaluation chain: each monomial = some lower monomial times one variable
        parent = np.zeros(self.size, dtype=int)
        var = np.full(self.size, -1, dtype=int)
        for i, e in enumerate(basis):
            if sum(e) == 0:
                continue
            v = next(idx for idx, p in enumerate(e) if p > 0)
            pe = list(e)
            pe[v] -= 1
            parent[i] = self.index[tuple(pe)]
            var[i] = v
        self._parent = parent
        self._var = var

    def zero(self) -> np.ndarray:
        return np.zeros(self.size)

    def const(self, c: float) -> np.ndarray:
        out = self.zero()
        out[0] = c
        return out

    def variable(self, v: int) -> np.ndarray:
        e = [0] * self.n_vars
        e[v] = 1
        out = self.zero()
        out[self.index[tuple(e)]] = 1.0
        return out

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.bincount(self._mo, weights=a[self._mi] * b[self._mj], minlength=self.size)

    def compose(self, u: np.ndarray, series: list[float]) -> np.ndarray:
        """F(u) for F with Taylor coefficients ``series`` around u[0]."""
        w = u.copy()
        w[0] = 0.0
        out = self.const(series[0])
        power = self.const(1.0)
        for n in range(1, len(series)):
            power = self.mul(power, w)
            out = out + series[n] * power
        return out

    def jet_log(self, u: np.ndarray) -> np.ndarray:
        u0 = u[0]
        if u0 <= 0:
            raise ValueError("log of a jet with non-positive constant term")
        series = [math.log(u0)] + [
            ((-1.0) ** (n + 1)) / (n * u0**n) for n in range(1, self.order + 1)
        ]
        return self.compose(u, series)

    def jet_exp(self, u: np.ndarray) -> np.ndarray:
        e0 = math.exp(u[0])
        series = [e0 / math.factorial(n) for n in range(self.order + 1)]
        return self.compose(u, series)

    def monomial_values(self, vars_batch: np.ndarray) -> np.ndarray:
        """All basis monomials evaluated on variable columns (n, n_vars)."""
        n = vars_batch.shape[0]
        out = np.empty((n, self.size))
        out[:, 0] = 1.0
        for i in range(1, self.size):
            out[:, i] = out[:, self._parent[i]] * vars_batch[:, self._var[i]]
        return out


@lru_cache(maxsize=32)
def _jet_context(n_vars: int, order: int) -> _JetContext:
    return _JetContext(n_vars, order)


def _pairs(k: int) -> list[tuple[int, int]]:
    """Distinct entry positions of a symmetric k x k matrix, 1-based, sorted."""
    return [(i, j) for i in range(1, k + 1) for j in range(i, k + 1)]


@dataclass
class RatioPolynomial:
    """Taylor polynomial of the density ratio in the entries of S_k - I_k."""

    k: int
    d: int
    x: float
    m_bound: float
    coef: np.ndarray = field(repr=False)
    within_uniform_region: bool = True

    def __post_init__(self):
        self._ctx = _jet_context(len(_pairs(self.k)), self.k)
        self._pairs = _pairs(self.k)

    @property
    def coefficients(self) -> dict[MonomialSpec, float]:
        """Map from monomial (multiset of index pairs) to coefficient."""
        out = {}
        for e, c in zip(self._ctx.basis, self.coef):
            factors = []
            for pos, power in enumerate(e):
                factors.extend([self._pairs[pos]] * power)
            out[MonomialSpec(self.k, tuple(factors))] = float(c)
        return out

    @property
    def constant_term(self) -> float:
        return float(self.coef[0])

    def max_abs_coefficient(self) -> float:
        return float(np.max(np.abs(self.coef)))


def build_psi(k: int, d: int, x: float, m_bound: float | None = None) -> RatioPolynomial:
    """Degree-k Taylor polynomial of the exact ratio at S_k = I_k.

    ``m_bound`` is the compact-range bound M with |x| <= M (defaults to
    max(1, |x|)).  Orders violating k >= 1, k < d or the analyticity
    requirement k x^2 < d are rejected by name; the stricter region
    d > max(3k, 2(k+1)M^2), on which the uniform coefficient and remainder
    bounds are guaranteed, only lowers ``within_uniform_region``.
    """
    if k < 1:
        raise ValueError("precondition violated: k >= 1")
    if not k < d:
        raise ValueError(f"precondition violated: k < d (k={k}, d={d})")
    m_bound = max(1.0, abs(x)) if m_bound is None else float(m_bound)
    if m_bound < abs(x):
        raise ValueError(f"precondition violated: |x| <= M (x={x}, M={m_bound})")
    if k * x * x >= d:
        raise ValueError(
            f"precondition violated: k x^2 < d (k={k}, x={x}, d={d}); "
            "the ratio is not analytic at S_k = I_k"
        )
    within = d > max(3 * k, 2 * (k + 1) * m_bound * m_bound)

    pairs = _pairs(k)
    ctx = _jet_context(len(pairs), k)
    # entries of E = S - I as jets (symmetric: (i,j) and (j,i) share a variable)
    entry = {}
    for v, (i, j) in enumerate(pairs):
        jet = ctx.variable(v)
        entry[(i, j)] = jet
        entry[(j, i)] = jet

    def s_entry(i: int, j: int) -> np.ndarray:
        e = entry[(i, j)].copy()
        if i == j:
            e[0] += 1.0
        return e

    # det(S) by permutation expansion (k <= 4 in practice)
    det = ctx.zero()
    for perm in itertools.permutations(range(1, k + 1)):
        sign = _perm_sign(perm)
        term = ctx.const(float(sign))
        for i, pi in enumerate(perm, start=1):
            term = ctx.mul(term, s_entry(i, pi))
        det = det + term

    # q = iota' S^{-1} iota via the Neumann series X = iota - E X (degree-raising)
    ones = [ctx.const(1.0) for _ in range(k)]
    xvec = [c.copy() for c in ones]
    for _ in range(k):
        new = []
        for i in range(1, k + 1):
            acc = ones[i - 1].copy()
            for j in range(1, k + 1):
                acc = acc - ctx.mul(entry[(i, j)], xvec[j - 1])
            new.append(acc)
        xvec = new
    q = ctx.zero()
    for comp in xvec:
        q = q + comp

    g = ctx.const(1.0) - (x * x / d) * q
    exponent = (
        ctx.const(_log_const(k, d) + 0.5 * k * x * x)
        - 0.5 * ctx.jet_log(det)
        + ((d - k - 2.0) / 2.0) * ctx.jet_log(g)
    )
    coef = ctx.jet_exp(exponent)
    return RatioPolynomial(k=k, d=d, x=x, m_bound=m_bound, coef=coef, within_uniform_region=within)


def _perm_sign(perm: tuple[int, ...]) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        length = 0
        j = i
        while not seen[j]:
            seen[j] = True
            j = perm[j] - 1
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _variables_from_gram(psi: RatioPolynomial, e: np.ndarray) -> np.ndarray:
    return np.array([e[i - 1, j - 1] for i, j in psi._pairs])


def psi_eval(psi: RatioPolynomial, gram: GramDeviation, warn_region: bool = True) -> float:
    """Evaluate the polynomial on one Gram deviation.

    Accumulation follows the fixed lexicographic basis order, so repeated
    evaluation is bitwise reproducible.  Deviations with ||S_k - I_k|| >=
    1/(2k) are outside the stated validity region; evaluation proceeds but a
    warning flags it.
    """
    if gram.k != psi.k:
        raise ValueError(f"gram order {gram.k} does not match polynomial order {psi.k}")
    if warn_region:
        import warnings

        from .deviations import spectral_norm

        if spectral_norm(gram.s_minus_i, tol=1e-8) >= 1.0 / (2.0 * psi.k):
            warnings.warn(
                "Gram deviation outside the validity region ||S-I|| < 1/(2k)",
                UserWarning,
                stacklevel=2,
            )
    vars_ = _variables_from_gram(psi, gram.s_minus_i)
    ctx = psi._ctx
    total = 0.0
    for idx in range(ctx.size):
        c = psi.coef[idx]
        if c == 0.0:
            continue
        term = c
        for pos, power in enumerate(ctx.basis[idx]):
            for _ in range(power):
                term *= vars_[pos]
        total += term
    return total


def psi_eval_batch(psi: RatioPolynomial, e_batch: np.ndarray) -> np.ndarray:
    """Vectorized evaluation on deviations of shape (n, k, k)."""
    idx = np.array([(i - 1) * psi.k + (j - 1) for i, j in psi._pairs])
    vars_batch = e_batch.reshape(e_batch.shape[0], -1)[:, idx]
    monos = psi._ctx.monomial_values(vars_batch)
    return monos @ psi.coef


# ---------------------------------------------------------------------------
# Monte Carlo functionals built on the polynomial
# ---------------------------------------------------------------------------


def _gram_batches(spec: DistributionSpec, k: int, reps: int, rng, chunk: int = 20_000):
    d = spec.d
    done = 0
    while done < reps:
        step = min(chunk, reps - done)
        z = sample(spec, k * step, rng).reshape(step, k, d)
        yield z @ np.swapaxes(z, 1, 2)  # raw inner products
        done += step


def poly_error_moment(
    spec: DistributionSpec,
    monomial: MonomialSpec,
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
) -> MonteCarloEstimate:
    """E[ d^{(k+deg H)/2} |H(S_k-I_k)| |ratio - psi_x(S_k-I_k)| ].

    The scaled, monomial-weighted absolute error of the polynomial
    approximation; tends to zero as d grows, uniformly over compact x ranges.
    """
    k = monomial.k
    if monomial.degree > k:
        raise ValueError("monomial degree must be <= k")
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    psi = build_psi(k, d, x)
    scale = d ** ((k + monomial.degree) / 2.0)
    eye = np.eye(k)
    chunks = []
    for raw in _gram_batches(spec, k, reps, rng):
        s = raw / d
        e = s - eye
        ratio = ratio_of_gram_batch(s, x, d)
        approx = psi_eval_batch(psi, e)
        chunks.append(scale * np.abs(monomial.evaluate(e)) * np.abs(ratio - approx))
    return batch_mean_se(np.concatenate(chunks))


def chain_moment_gap_poly(
    spec: DistributionSpec,
    l: int,
    m: int,
    j_indices: tuple[int, ...],
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
) -> MonteCarloEstimate:
    """Chain moment against psi instead of the exact ratio, same centering."""
    validate_chain_indices(l, m, tuple(j_indices))
    if l >= spec.d:
        raise ValueError(f"order l={l} must be < d={spec.d}")
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    psi = build_psi(l, d, x)
    j_indices = tuple(j_indices)
    center = float(x ** (2 * (j_indices[-1] - m))) if m > 0 else 1.0
    eye = np.eye(l)
    chunks = []
    for raw in _gram_batches(spec, l, reps, rng):
        e = raw / d - eye
        approx = psi_eval_batch(psi, e)
        chunks.append(_chain_product(raw, j_indices) * approx - center)
    return batch_mean_se(np.concatenate(chunks))


def cycle_moment_gap_poly(
    spec: DistributionSpec,
    k: int,
    x: float,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
) -> MonteCarloEstimate:
    """Alternating cycle sum against psi instead of the exact ratio."""
    if k < 2 or k % 2 != 0:
        raise ValueError("cycle functional requires an even order k >= 2")
    if k >= spec.d:
        raise ValueError(f"order k={k} must be < d={spec.d}")
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    psi = build_psi(k, d, x)
    center = float((1.0 - x * x) ** k)
    eye = np.eye(k)
    chunks = []
    for raw in _gram_batches(spec, k, reps, rng):
        e = raw / d - eye
        approx = psi_eval_batch(psi, e)
        acc = np.zeros(raw.shape[0])
        for j in range(1, k + 1):
            acc += math.comb(k, j) * (-1.0) ** j * (_cycle_values(raw, j) - d)
        chunks.append(acc * approx - center)
    return batch_mean_se(np.concatenate(chunks))


def export_coefficients_csv(psi: RatioPolynomial, path) -> None:
    """Write (monomial, coefficient) rows for audit."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["monomial", "degree", "coefficient"])
        for mono, c in psi.coefficients.items():
            writer.writerow([str(mono), mono.degree, f"{c:.17g}"])
