"""Gram-moment diagnostics behind the dimension sweep.

The convergence machinery needs scaled moments of S_k - I_k (S_k the k x k
matrix of scaled inner products of i.i.d. copies) to decay at specific rates.
This demo prints the three diagnostic families for two laws:

  * d^{h/2} E[H]: -> 1 for squared off-diagonal entries, -> 0 with a linear
    factor present;
  * the odd norm moment E[(sqrt(d)||S_4 - I_4||)^9]: bounded in d;
  * the Gaussian-replacement gap for the exceptional monomial pairs, whose
    limits are explicit moment expressions (exactly 0 for the Gaussian).
"""

import numpy as np

from projlab import gaussian, product_uniform
from projlab.momentlab import (
    MonomialSpec,
    closed_cycle_monomial,
    gaussian_replacement_gap,
    moment_decay_diagnostic,
)

rng = np.random.default_rng(13)

sq = MonomialSpec(4, ((1, 2), (1, 2)))
lin = MonomialSpec(4, ((1, 2), (2, 3)))

print("scaled moments d^{h/2} E[H] and the norm moment, k = 4:")
print(f"{'family':>16} {'d':>5} {'E[e12^2]*d':>12} {'E[e12 e23]*d':>13} {'norm moment':>12}")
for family in (gaussian, product_uniform):
    for d in (16, 64, 256):
        spec = family(d)
        a = moment_decay_diagnostic(spec, sq, reps=40_000, rng=rng, norm_reps=4000)
        b = moment_decay_diagnostic(spec, lin, reps=40_000, rng=rng, norm_reps=1000)
        print(
            f"{spec.family:>16} {d:>5} "
            f"{a.scaled_moment.value:12.3f} {b.scaled_moment.value:13.3f} "
            f"{a.norm_moment.value:12.2f}"
        )

print("\nGaussian-replacement gaps for the exceptional pairs (d = 16):")
g = closed_cycle_monomial(4, 2)
cases = {
    "diagonal entry": MonomialSpec(4, ((1, 1),)),
    "off-diagonal": MonomialSpec(4, ((1, 2),)),
    "squared off-diag": MonomialSpec(4, ((1, 2), (1, 2))),
}
for family in (gaussian, product_uniform):
    spec = family(16)
    print(f"  {spec.family}:")
    for name, h in cases.items():
        gap = gaussian_replacement_gap(spec, g, h, reps=150_000, rng=rng)
        analytic = "n/a" if gap.analytic is None else f"{gap.analytic:+.4f}"
        print(
            f"    {name:>16}: estimate {gap.difference.value:+.4f} "
            f"+- {gap.difference.se:.4f}, analytic {analytic}"
        )
