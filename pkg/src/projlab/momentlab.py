"""Moment diagnostics for scaled Gram deviations S_k - I_k.

The decay conditions under which the main convergence statements hold are
phrased through monomials in the entries of S_k - I_k, S_k = (Z_i'Z_j/d):

* first-moment decay: d^{h/2} E[H] -> 1 for products of squared off-diagonal
  entries, -> 0 when H contains a linear factor, and the norm moment
  E[(sqrt(d) ||S_k - I_k||)^{2k+1}] stays bounded;
* cycle coupling: d^g E[G H] -> 0 for the closed cycle G of length g and any
  lower-degree H built from the first g vectors;
* Gaussian replacement: E[d^{deg G}(G - E G) H] changes by a vanishing amount
  when the law is swapped for the Gaussian, except for three exceptional
  (G, H) shapes whose limits are explicit moment expressions.

Everything here is plain Monte Carlo with batch-mean standard errors; the
exceptional-case values are additionally evaluated analytically from the
component moments when the law is a product law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deviations import spectral_norm_batch
from .distributions import DistributionSpec, component_moments, gaussian, sample
from .mc import MonteCarloEstimate, batch_mean_se, combine_se
from .streams import split_rng

__all__ = [
    "MonomialSpec",
    "closed_cycle_monomial",
    "open_chain_monomial",
    "moment_decay_diagnostic",
    "gram_norm_moment",
    "cycle_coupling_diagnostic",
    "gaussian_replacement_gap",
    "exceptional_case",
    "exceptional_case_value",
    "alternating_weight_sum",
    "alternating_pair_sum",
    "MomentDiagnostic",
    "ReplacementGap",
]


@dataclass(frozen=True)
class MonomialSpec:
    """A monomial in the entries of S_k - I_k: a multiset of index pairs.

    Pairs are 1-based with i <= j and stored sorted, so two specs are equal
    exactly when they denote the same monomial.
    """

    k: int
    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        canon = []
        for i, j in self.factors:
            a, b = (i, j) if i <= j else (j, i)
            if not (1 <= a <= b <= self.k):
                raise ValueError(f"factor ({i},{j}) out of range for k={self.k}")
            canon.append((a, b))
        object.__setattr__(self, "factors", tuple(sorted(canon)))

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def indices(self) -> set[int]:
        return {i for f in self.factors for i in f}

    def has_linear_factor(self) -> bool:
        """True unless every factor appears with even multiplicity."""
        from collections import Counter

        return any(c % 2 for c in Counter(self.factors).values())

    def is_pure_square_offdiag(self) -> bool:
        from collections import Counter

        counts = Counter(self.factors)
        return all(i < j for i, j in counts) and all(c % 2 == 0 for c in counts.values())

    def evaluate(self, grams: np.ndarray) -> np.ndarray:
        """Evaluate on a batch of deviations (n, k, k); degree 0 gives 1."""
        out = np.ones(grams.shape[0])
        for i, j in self.factors:
            out = out * grams[:, i - 1, j - 1]
        return out

    def __str__(self) -> str:
        return "*".join(f"e{i}{j}" for i, j in self.factors) if self.factors else "1"


def closed_cycle_monomial(k: int, j: int) -> MonomialSpec:
    """Cycle (1,2)(2,3)...(j,1); j = 1 is the diagonal entry (1,1)."""
    if not 1 <= j <= k:
        raise ValueError(f"cycle length j={j} must satisfy 1 <= j <= k={k}")
    if j == 1:
        return MonomialSpec(k, ((1, 1),))
    pairs = [(t, t + 1) for t in range(1, j)] + [(j, 1)]
    return MonomialSpec(k, tuple(pairs))


def open_chain_monomial(k: int, j_indices: tuple[int, ...]) -> MonomialSpec:
    """Disjoint chains (j_{i-1}+1, ..., j_i) as a product of adjacent pairs."""
    from .gaussratio import validate_chain_indices

    m = len(j_indices) - 1
    validate_chain_indices(k, m, tuple(j_indices))
    pairs = []
    for i in range(1, m + 1):
        lo, hi = j_indices[i - 1] + 1, j_indices[i]
        pairs.extend((t, t + 1) for t in range(lo, hi))
    return MonomialSpec(k, tuple(pairs))


# ---------------------------------------------------------------------------
# sampling helper
# ---------------------------------------------------------------------------


def _gram_deviations(spec: DistributionSpec, k: int, reps: int, rng, chunk: int = 20_000):
    """Yield batches of S_k - I_k for i.i.d. k-tuples from the law."""
    d = spec.d
    eye = np.eye(k)
    done = 0
    while done < reps:
        step = min(chunk, reps - done)
        z = sample(spec, k * step, rng).reshape(step, k, d)
        yield z @ np.swapaxes(z, 1, 2) / d - eye
        done += step


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentDiagnostic:
    scaled_moment: MonteCarloEstimate  # d^{h/2} E[H]
    norm_moment: MonteCarloEstimate  # E[(sqrt(d) ||S_k - I_k||)^{2k+1}]


def moment_decay_diagnostic(
    spec: DistributionSpec,
    monomial: MonomialSpec,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
    norm_reps: int | None = None,
) -> MomentDiagnostic:
    """Estimate d^{h/2} E[H] and the odd-order Gram-norm moment."""
    if monomial.degree > 2 * monomial.k:
        raise ValueError("monomial degree must be <= 2k")
    rng = np.random.default_rng() if rng is None else rng
    rng_h, rng_n = split_rng(rng, 2)
    k, d = monomial.k, spec.d
    scale = d ** (monomial.degree / 2.0)
    vals = np.concatenate(
        [scale * monomial.evaluate(g) for g in _gram_deviations(spec, k, reps, rng_h)]
    )
    norm_reps = reps if norm_reps is None else norm_reps
    power = 2 * k + 1
    nvals = np.concatenate(
        [
            (math.sqrt(d) * spectral_norm_batch(g)) ** power
            for g in _gram_deviations(spec, k, norm_reps, rng_n)
        ]
    )
    return MomentDiagnostic(batch_mean_se(vals), batch_mean_se(nvals))


def gram_norm_moment(
    spec: DistributionSpec, k: int, reps: int = 50_000, rng: np.random.Generator | None = None
) -> MonteCarloEstimate:
    """E[(sqrt(d) ||S_k - I_k||)^{2k+1}] alone."""
    rng = np.random.default_rng() if rng is None else rng
    d = spec.d
    power = 2 * k + 1
    vals = np.concatenate(
        [
            (math.sqrt(d) * spectral_norm_batch(g)) ** power
            for g in _gram_deviations(spec, k, reps, rng)
        ]
    )
    return batch_mean_se(vals)


def cycle_coupling_diagnostic(
    spec: DistributionSpec,
    cycle_len: int,
    h_monomial: MonomialSpec,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
) -> MonteCarloEstimate:
    """d^g E[G H] for the closed cycle G of length g and a lower-degree H.

    Constraints: 2 <= deg(H) < g <= k and H built from the first g vectors.
    """
    k = h_monomial.k
    g = cycle_len
    h = h_monomial.degree
    if not g <= k:
        raise ValueError(f"constraint violated: g <= k (g={g}, k={k})")
    if not 2 <= h:
        raise ValueError(f"constraint violated: deg(H) >= 2 (got {h})")
    if not h < g:
        raise ValueError(f"constraint violated: deg(H) < g (deg={h}, g={g})")
    if any(i > g for i in h_monomial.indices):
        raise ValueError("constraint violated: H may only involve vectors 1..g")
    rng = np.random.default_rng() if rng is None else rng
    cycle = closed_cycle_monomial(k, g)
    d = spec.d
    vals = np.concatenate(
        [
            d**g * cycle.evaluate(gr) * h_monomial.evaluate(gr)
            for gr in _gram_deviations(spec, k, reps, rng)
        ]
    )
    return batch_mean_se(vals)


# ---------------------------------------------------------------------------
# Gaussian replacement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplacementGap:
    difference: MonteCarloEstimate
    law_term: MonteCarloEstimate
    gaussian_term: MonteCarloEstimate
    case: str | None  # "a" | "b" | "c" | None
    analytic: float | None


def _centered_product_estimate(
    spec: DistributionSpec, g: MonomialSpec, h: MonomialSpec, reps: int, rng, n_batches: int = 100
) -> MonteCarloEstimate:
    """E[d^{deg G}(G - E[G]) H] = d^{deg G} Cov(G, H), by per-batch covariances."""
    k = max(g.k, h.k)
    g = MonomialSpec(k, g.factors)
    h = MonomialSpec(k, h.factors)
    scale = spec.d ** g.degree
    covs = []
    per = max(reps // n_batches, 2)
    for gr in _gram_deviations(spec, k, n_batches * per, rng, chunk=per):
        gv = g.evaluate(gr)
        hv = h.evaluate(gr)
        covs.append(scale * (np.mean(gv * hv) - np.mean(gv) * np.mean(hv)))
    covs = np.asarray(covs)
    return MonteCarloEstimate(
        value=float(covs.mean()),
        se=float(covs.std(ddof=1) / math.sqrt(len(covs))),
        reps=n_batches * per,
    )


def exceptional_case(g: MonomialSpec, h: MonomialSpec) -> str | None:
    """Classify (G, H) into the exceptional shapes, if any.

    G must be a closed cycle of some length j; the shapes are (a) a diagonal
    entry (a,a) with a <= j, (b) one off-diagonal entry (a,b) with b <= j,
    (c) the square of such an entry.
    """
    j = None
    for jj in range(1, g.k + 1):
        if g == closed_cycle_monomial(g.k, jj):
            j = jj
            break
    if j is None:
        return None
    f = h.factors
    if len(f) == 1 and f[0][0] == f[0][1] and f[0][0] <= j:
        return "a"
    if len(f) == 1 and f[0][0] < f[0][1] and f[0][1] <= j:
        return "b"
    if len(f) == 2 and f[0] == f[1] and f[0][0] < f[0][1] and f[0][1] <= j:
        return "c"
    return None


def exceptional_case_value(spec: DistributionSpec, case: str) -> float | None:
    """Analytic replacement-gap value from component moments (product laws).

    case a: Var[Z'Z]/d - 2            = m4 - 3
    case b: E[(Z_1'Z_2)^3]/d          = m3^2
    case c: Var[(Z_1'Z_2)^2]/d^2 - 2(1 + 3/d) = (m4^2 - 9)/d
    """
    mom = component_moments(spec)
    if mom is None:
        return None
    if case == "a":
        return mom["m4"] - 3.0
    if case == "b":
        return mom["m3"] ** 2
    if case == "c":
        return (mom["m4"] ** 2 - 9.0) / spec.d
    raise ValueError(f"unknown exceptional case {case!r}")


def gaussian_replacement_gap(
    spec: DistributionSpec,
    g: MonomialSpec,
    h: MonomialSpec,
    reps: int = 100_000,
    rng: np.random.Generator | None = None,
) -> ReplacementGap:
    """E[d^{deg G}(G - EG) H] under the law minus the same under the Gaussian."""
    if g.degree > g.k or h.degree > h.k:
        raise ValueError("monomial degree must be <= k")
    rng = np.random.default_rng() if rng is None else rng
    rng_law, rng_gauss = split_rng(rng, 2)
    law = _centered_product_estimate(spec, g, h, reps, rng_law)
    gau = _centered_product_estimate(gaussian(spec.d), g, h, reps, rng_gauss)
    diff = MonteCarloEstimate(
        value=law.value - gau.value,
        se=combine_se(law.se, gau.se),
        reps=law.reps + gau.reps,
    )
    case = exceptional_case(g, h)
    analytic = exceptional_case_value(spec, case) if case else None
    return ReplacementGap(diff, law, gau, case, analytic)


# ---------------------------------------------------------------------------
# exact combinatorial identities used by the order-4 cancellation step
# ---------------------------------------------------------------------------


def alternating_weight_sum(k: int) -> int:
    """sum_j C(k,j)(-1)^j j; equals -k * sum_j C(k-1,j)(-1)^j, i.e. 0 for k >= 2."""
    return sum(math.comb(k, j) * (-1) ** j * j for j in range(1, k + 1))


def alternating_pair_sum(k: int) -> int:
    """sum_j C(k,j)(-1)^j C(j,2); equals sum_j C(k-2,j)(-1)^j, i.e. 0 for k >= 3."""
    return sum(math.comb(k, j) * (-1) ** j * math.comb(j, 2) for j in range(1, k + 1))
