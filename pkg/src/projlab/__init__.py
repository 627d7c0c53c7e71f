"""projlab: conditional moments of low-dimensional projections, numerically.

A laboratory for checking, at desk scale, that projections of standardized
high-dimensional vectors have nearly linear conditional means and nearly
constant conditional variances for most directions: exact density-ratio
evaluation, its polynomial approximation, Gram-moment diagnostics,
conditional-moment estimators, dimension sweeps, and the SIR/SAVE and
sparse-submodel consequences.
"""

from .distributions import (
    DistributionSpec,
    density,
    gaussian,
    log_density,
    make_spec,
    product_laplace,
    product_scaled_t,
    product_uniform,
    sample,
    spherical_shell_mixture,
)
from .geometry import Direction, make_w, make_w_batch, sample_direction
from .estimators import (
    ConditionalMomentEstimate,
    estimate_gauss_is,
    estimate_kernel,
    estimate_slicing,
    estimate_slicing_streamed,
)
from .deviations import (
    DeviationReport,
    build_report,
    deviation_d1,
    deviation_d2,
    spectral_norm,
)
from .gaussratio import (
    GramDeviation,
    chain_moment_gap,
    cycle_moment_gap,
    density_ratio,
    log_density_ratio,
    marginal_mse,
    marginal_mse_iid,
    mean_linearity_gap,
)
from .polyapprox import (
    RatioPolynomial,
    build_psi,
    chain_moment_gap_poly,
    cycle_moment_gap_poly,
    poly_error_moment,
    psi_eval,
)
from .momentlab import (
    MonomialSpec,
    cycle_coupling_diagnostic,
    gaussian_replacement_gap,
    moment_decay_diagnostic,
)
from .experiments import ExperimentConfig, ProofConfig, run_proof_sweep, run_theorem_sweep
from .applications import (
    SparseModelCase,
    save_estimate,
    sir_estimate,
    sparse_submodel_check,
)

__version__ = "0.1.0"
