"""Gram-moment diagnostics, Gaussian replacement, exact cancellation identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projlab.distributions import gaussian, product_laplace, product_uniform, spherical_shell_mixture
from projlab.momentlab import (
    MonomialSpec,
    alternating_pair_sum,
    alternating_weight_sum,
    closed_cycle_monomial,
    cycle_coupling_diagnostic,
    exceptional_case,
    exceptional_case_value,
    gaussian_replacement_gap,
    gram_norm_moment,
    moment_decay_diagnostic,
    open_chain_monomial,
)


# --- monomial bookkeeping ---------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.permutations(list(range(4))))
def test_monomial_canonical_order(perm):
    factors = [(1, 2), (2, 3), (1, 1), (3, 4)]
    shuffled = tuple(factors[i] for i in perm)
    assert MonomialSpec(4, shuffled) == MonomialSpec(4, tuple(factors))


def test_monomial_flips_pairs():
    assert MonomialSpec(3, ((2, 1),)) == MonomialSpec(3, ((1, 2),))


def test_monomial_range_check():
    with pytest.raises(ValueError, match="out of range"):
        MonomialSpec(2, ((1, 3),))


def test_linear_factor_detection():
    assert MonomialSpec(4, ((1, 2),)).has_linear_factor()
    assert MonomialSpec(4, ((1, 2), (2, 3))).has_linear_factor()
    assert not MonomialSpec(4, ((1, 2), (1, 2))).has_linear_factor()
    assert MonomialSpec(4, ((1, 2), (1, 2))).is_pure_square_offdiag()
    assert not MonomialSpec(4, ((1, 1), (1, 1))).is_pure_square_offdiag()


def test_cycle_and_chain_constructors():
    assert closed_cycle_monomial(4, 1) == MonomialSpec(4, ((1, 1),))
    assert closed_cycle_monomial(4, 2) == MonomialSpec(4, ((1, 2), (1, 2)))
    assert closed_cycle_monomial(4, 3) == MonomialSpec(4, ((1, 2), (2, 3), (1, 3)))
    assert open_chain_monomial(4, (0, 2)) == MonomialSpec(4, ((1, 2),))
    assert open_chain_monomial(4, (0, 2, 4)) == MonomialSpec(4, ((1, 2), (3, 4)))


# --- first-moment decay -----------------------------------------------------


def test_gaussian_pure_quadratic_is_one():
    # E[(Z_1'Z_2)^2] = d exactly, so d * E[e12^2] = 1.
    diag = moment_decay_diagnostic(
        gaussian(32), MonomialSpec(4, ((1, 2), (1, 2))), reps=60_000,
        rng=np.random.default_rng(1), norm_reps=2000,
    )
    assert abs(diag.scaled_moment.value - 1.0) <= 4 * diag.scaled_moment.se


def test_gaussian_disjoint_quadratic_pair_is_one():
    diag = moment_decay_diagnostic(
        gaussian(32), MonomialSpec(4, ((1, 2), (1, 2), (3, 4), (3, 4))), reps=60_000,
        rng=np.random.default_rng(2), norm_reps=2000,
    )
    assert abs(diag.scaled_moment.value - 1.0) <= 4 * diag.scaled_moment.se


@pytest.mark.parametrize(
    "mono",
    [
        MonomialSpec(4, ((1, 2),)),
        MonomialSpec(4, ((1, 1),)),
        MonomialSpec(4, ((1, 2), (2, 3))),
    ],
    ids=str,
)
def test_linear_factor_monomials_centered(mono):
    for spec in (gaussian(24), product_uniform(24)):
        diag = moment_decay_diagnostic(
            spec, mono, reps=60_000, rng=np.random.default_rng(3), norm_reps=2000
        )
        assert abs(diag.scaled_moment.value) <= 4 * diag.scaled_moment.se, (spec.family, mono)


def test_degree_cap():
    with pytest.raises(ValueError, match="2k"):
        moment_decay_diagnostic(
            gaussian(8), MonomialSpec(1, ((1, 1),) * 3), reps=1000, rng=np.random.default_rng(0)
        )


def test_norm_moment_no_growth_small():
    rng = np.random.default_rng(4)
    vals = [gram_norm_moment(gaussian(d), k=2, reps=4000, rng=rng) for d in (16, 64)]
    assert vals[1].value <= vals[0].value + 4 * math.hypot(vals[0].se, vals[1].se)


# --- cycle coupling ----------------------------------------------------------


def test_cycle_coupling_trends_to_zero():
    h = MonomialSpec(4, ((1, 2), (1, 2)))
    for family in (gaussian, product_uniform):
        rng = np.random.default_rng(5)
        small = cycle_coupling_diagnostic(family(16), 3, h, reps=100_000, rng=rng)
        large = cycle_coupling_diagnostic(family(128), 3, h, reps=200_000, rng=rng)
        assert abs(large.value) <= abs(small.value) + 4 * math.hypot(small.se, large.se)


def test_cycle_coupling_constraints_named():
    with pytest.raises(ValueError, match="deg\\(H\\) < g"):
        cycle_coupling_diagnostic(
            gaussian(16), 2, MonomialSpec(4, ((1, 2), (1, 2))), reps=1000,
            rng=np.random.default_rng(0),
        )
    with pytest.raises(ValueError, match="deg\\(H\\) >= 2"):
        cycle_coupling_diagnostic(
            gaussian(16), 3, MonomialSpec(4, ((1, 2),)), reps=1000, rng=np.random.default_rng(0)
        )
    with pytest.raises(ValueError, match="vectors 1..g"):
        cycle_coupling_diagnostic(
            gaussian(16), 3, MonomialSpec(4, ((1, 4), (1, 4))), reps=1000,
            rng=np.random.default_rng(0),
        )


# --- Gaussian replacement ----------------------------------------------------


def test_exceptional_case_classification():
    g2 = closed_cycle_monomial(4, 2)
    assert exceptional_case(g2, MonomialSpec(4, ((1, 1),))) == "a"
    assert exceptional_case(g2, MonomialSpec(4, ((2, 2),))) == "a"
    assert exceptional_case(g2, MonomialSpec(4, ((1, 2),))) == "b"
    assert exceptional_case(g2, MonomialSpec(4, ((1, 2), (1, 2)))) == "c"
    # index beyond the cycle is not exceptional
    assert exceptional_case(g2, MonomialSpec(4, ((3, 3),))) is None
    assert exceptional_case(g2, MonomialSpec(4, ((1, 3),))) is None
    # non-cycle G is never exceptional
    assert exceptional_case(MonomialSpec(4, ((1, 2), (3, 4))), MonomialSpec(4, ((1, 1),))) is None


def test_gaussian_exceptional_values_exact_zero():
    spec = gaussian(16)
    assert exceptional_case_value(spec, "a") == 0.0
    assert exceptional_case_value(spec, "b") == 0.0
    assert exceptional_case_value(spec, "c") == 0.0


def test_product_law_exceptional_values():
    # chi-square-style variance, odd moment, fourth-moment identities
    assert exceptional_case_value(product_uniform(10), "a") == pytest.approx(-1.2)
    assert exceptional_case_value(product_laplace(10), "a") == pytest.approx(3.0)
    assert exceptional_case_value(product_uniform(10), "c") == pytest.approx(
        (1.8**2 - 9.0) / 10.0
    )
    assert exceptional_case_value(spherical_shell_mixture(10), "a") is None


@pytest.mark.parametrize("case_h", [
    ("a", MonomialSpec(4, ((1, 1),))),
    ("b", MonomialSpec(4, ((1, 2),))),
    ("c", MonomialSpec(4, ((1, 2), (1, 2)))),
])
def test_replacement_gap_matches_analytic_uniform(case_h):
    case, h = case_h
    spec = product_uniform(16)
    gap = gaussian_replacement_gap(
        spec, closed_cycle_monomial(4, 2), h, reps=200_000, rng=np.random.default_rng(6)
    )
    assert gap.case == case
    assert gap.analytic == pytest.approx(exceptional_case_value(spec, case))
    assert abs(gap.difference.value - gap.analytic) <= 4 * gap.difference.se


def test_replacement_gap_gaussian_null():
    # non-exceptional pair: the machinery itself must report zero
    g = open_chain_monomial(4, (0, 3))  # e12*e23
    h = MonomialSpec(4, ((1, 2), (1, 2)))
    gap = gaussian_replacement_gap(gaussian(16), g, h, reps=150_000, rng=np.random.default_rng(7))
    assert gap.case is None and gap.analytic is None
    assert abs(gap.difference.value) <= 4 * gap.difference.se


def test_replacement_gap_shell_has_no_analytic():
    gap = gaussian_replacement_gap(
        spherical_shell_mixture(12, radii=(0.8, 1.2), dof=16),
        closed_cycle_monomial(2, 2),
        MonomialSpec(2, ((1, 1),)),
        reps=20_000,
        rng=np.random.default_rng(8),
    )
    assert gap.case == "a" and gap.analytic is None


# --- exact cancellation identities -------------------------------------------


def test_alternating_sums_vanish_at_k4():
    assert alternating_weight_sum(4) == 0
    assert alternating_pair_sum(4) == 0


def test_alternating_sums_equal_display_forms():
    for k in range(2, 8):
        rhs1 = -k * sum(math.comb(k - 1, j) * (-1) ** j for j in range(k))
        assert alternating_weight_sum(k) == rhs1
    for k in range(3, 8):
        rhs2 = sum(math.comb(k - 2, j) * (-1) ** j for j in range(k - 1))
        assert alternating_pair_sum(k) == rhs2
