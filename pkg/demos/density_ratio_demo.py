"""The closed-form density ratio and its degree-k polynomial shadow.

Evaluates the joint density of k shared-direction reference vectors against
the i.i.d. Gaussian product, checks that it integrates to one, and shows how
fast the Taylor polynomial in the Gram deviation S_k - I_k tracks it as the
deviation shrinks (remainder of order ||S_k - I_k||^{k+1}).
"""

import numpy as np

from projlab import GramDeviation, build_psi, density_ratio, gaussian, psi_eval, sample
from projlab.gaussratio import ratio_of_gram_batch

k, d, x = 2, 64, 1.0
rng = np.random.default_rng(7)

# normalization: the ratio integrates to 1 against the Gaussian product
reps = 200_000
z = sample(gaussian(d), k * reps, rng).reshape(reps, k, d)
r = ratio_of_gram_batch(z @ np.swapaxes(z, 1, 2) / d, x, d)
print(f"E[ratio] over N(0,I)^{k}: {r.mean():.5f} +- {r.std(ddof=1)/np.sqrt(reps):.5f} (target 1)")

# polynomial shadow
psi = build_psi(k, d, x)
print(f"\npolynomial at S_k = I_k (constant term): {psi.constant_term:.6f}")
print(f"number of coefficients (degree <= {k}): {len(psi.coef)}")

print("\nremainder vs deviation size (one random direction):")
e0 = rng.standard_normal((k, k))
e0 = 0.5 * (e0 + e0.T)
e0 /= np.abs(np.linalg.eigvalsh(e0)).max()
print(f"{'||S-I||':>10} {'|ratio - psi|':>14} {'ratio of consecutive':>21}")
prev = None
for t in (0.02, 0.01, 0.005, 0.0025):
    g = GramDeviation(k=k, s_minus_i=t * e0, d=d)
    rem = abs(density_ratio(g, x) - psi_eval(psi, g, warn_region=False))
    note = f"{prev / rem:21.1f}" if prev else f"{'':>21}"
    print(f"{t:10.4f} {rem:14.3e} {note}   (2^{k+1} = {2**(k+1)} per halving)")
    prev = rem
