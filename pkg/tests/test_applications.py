"""Direction recovery (SIR/SAVE) and the sparse-submodel projection check."""

import math

import numpy as np
import pytest

from projlab.applications import (
    SparseModelCase,
    alignment,
    save_estimate,
    simulate_link_response,
    sir_estimate,
    sparse_submodel_check,
)
from projlab.distributions import gaussian, product_uniform, sample
from projlab.geometry import sample_direction


def _link_data(link, d, n, seed, family=gaussian, noise_sd=0.2):
    rng = np.random.default_rng(seed)
    z = sample(family(d), n, rng)
    beta = sample_direction(d, rng).beta
    y = simulate_link_response(z, beta, link, noise_sd, rng)
    return y, z, beta


def test_sir_linear_link():
    y, z, beta = _link_data("linear", 20, 2000, 1)
    assert alignment(sir_estimate(y, z), beta) >= 0.9


def test_sir_cubic_link():
    y, z, beta = _link_data("cubic", 20, 2000, 2)
    assert alignment(sir_estimate(y, z), beta) >= 0.9


def test_sir_square_link_fails():
    # symmetric link defeats first-moment methods: E[Z | y] = 0
    y, z, beta = _link_data("square", 20, 4000, 3)
    assert alignment(sir_estimate(y, z), beta) < 0.3


def test_save_square_link():
    y, z, beta = _link_data("square", 20, 4000, 4)
    assert alignment(save_estimate(y, z), beta) >= 0.9


def test_save_null_no_signal():
    # independent response: alignment must stay below the null ceiling
    d, n = 20, 4000
    rng = np.random.default_rng(5)
    beta = sample_direction(d, rng).beta
    null_aligns = []
    for _ in range(100):
        z = rng.standard_normal((n, d))
        y = rng.standard_normal(n)
        null_aligns.append(alignment(save_estimate(y, z), beta))
    assert max(null_aligns) < 0.6  # no direction reaches signal-level alignment


def test_save_uniform_large_d():
    # large-d product law: approximate moment conditions suffice
    y, z, beta = _link_data("square", 200, 40_000, 6, family=product_uniform)
    assert alignment(save_estimate(y, z), beta) >= 0.8


def test_sir_save_relabeling_invariant():
    y, z, _ = _link_data("linear", 8, 1000, 7)
    perm = np.random.default_rng(8).permutation(len(y))
    assert np.array_equal(sir_estimate(y, z), sir_estimate(y[perm], z[perm]))
    assert np.array_equal(save_estimate(y, z), save_estimate(y[perm], z[perm]))


def test_degenerate_response_rejected():
    z = np.random.default_rng(0).standard_normal((200, 3))
    with pytest.raises(ValueError, match="degenerate"):
        sir_estimate(np.ones(200), z)


def _random_case(d, rng):
    a = rng.standard_normal((d, d)) / math.sqrt(d)
    m = np.eye(d) + 0.25 * (a + a.T)
    w, v = np.linalg.eigh(m @ m.T)
    m_root = (v * np.sqrt(w)) @ v.T
    theta = rng.standard_normal(d)
    return SparseModelCase(theta=theta, m_root=m_root)


def test_sparse_c_hat_matches_theory_over_cases():
    rng = np.random.default_rng(9)
    n = 100_000
    for _ in range(20):
        case = _random_case(12, rng)
        res = sparse_submodel_check(case, gaussian(12), n, rng)
        assert abs(res.c_hat - res.c_theory) <= 4 * res.c_se


def test_sparse_identity_covariance_gives_theta1():
    theta = np.array([0.7, -1.2, 0.4])
    case = SparseModelCase(theta=theta, m_root=np.eye(3))
    res = sparse_submodel_check(case, gaussian(3), 20_000, np.random.default_rng(10))
    assert res.c_theory == theta[0]  # exact


def test_sparse_gaussian_residual_curves_null():
    rng = np.random.default_rng(11)
    case = _random_case(16, rng)
    res = sparse_submodel_check(case, gaussian(16), 100_000, rng)
    assert np.all(np.abs(res.residual_mean) <= 4 * res.residual_mean_se)
    grand_var = np.average(res.residual_var)
    assert np.all(np.abs(res.residual_var - grand_var) <= 4 * res.residual_var_se)


def test_sparse_uniform_large_d_curves_near_null_floor():
    rng = np.random.default_rng(12)
    d, n = 256, 100_000
    case = _random_case(d, rng)
    res_u = sparse_submodel_check(case, product_uniform(d), n, np.random.default_rng(13))
    res_g = sparse_submodel_check(case, gaussian(d), n, np.random.default_rng(13))
    mean_floor = np.max(np.abs(res_g.residual_mean))
    var_floor = np.max(np.abs(res_g.residual_var - np.average(res_g.residual_var)))
    assert np.max(np.abs(res_u.residual_mean)) <= 2 * mean_floor
    assert np.max(np.abs(res_u.residual_var - np.average(res_u.residual_var))) <= 2 * var_floor


def test_sparse_scale_equivariance():
    rng = np.random.default_rng(14)
    case = _random_case(6, rng)
    doubled = SparseModelCase(theta=2.0 * case.theta, m_root=case.m_root,
                              noise_sd=2.0 * case.noise_sd)
    res1 = sparse_submodel_check(case, gaussian(6), 20_000, np.random.default_rng(15))
    res2 = sparse_submodel_check(doubled, gaussian(6), 20_000, np.random.default_rng(15))
    assert res2.c_theory == 2.0 * res1.c_theory  # exact: power-of-two scaling
    assert res2.c_hat == 2.0 * res1.c_hat


def test_sparse_nonlinear_link_rejected():
    case = SparseModelCase(theta=np.ones(3), m_root=np.eye(3), link="square")
    with pytest.raises(ValueError, match="linear"):
        sparse_submodel_check(case, gaussian(3), 5000, np.random.default_rng(0))


def test_case_validation():
    with pytest.raises(ValueError, match="positive definite"):
        SparseModelCase(theta=np.ones(2), m_root=np.zeros((2, 2)))
    with pytest.raises(ValueError, match="nonzero"):
        SparseModelCase(theta=np.zeros(2), m_root=np.eye(2))
