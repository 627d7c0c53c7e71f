"""Acceptance criteria, one test per criterion, printed pass/fail lines.

Statistical gates follow the stated tolerances: exact assertions where the
value is exact, 4 Monte Carlo SEs for estimates of known targets, 2 binomial
SEs for exceedance-fraction comparisons.  The dimension-sweep criterion runs
at full budgets (d up to 512, 200 directions per dimension, plus matched
Gaussian calibration and the spherical-shell contrast) and is the long pole.
"""

import itertools
import math
import os
import time

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
from projlab.distributions import gaussian, log_density, gaussian_log_density, product_uniform, sample
from projlab.estimators import estimate_gauss_is, estimate_slicing
from projlab.experiments import ExperimentConfig, ProofConfig, run_proof_sweep, run_theorem_sweep
from projlab.gaussratio import (
    GramDeviation,
    chain_moment_gap,
    cycle_moment_gap,
    density_ratio,
    marginal_mse,
    mean_linearity_gap,
)
from projlab.geometry import make_w_batch, sample_direction
from projlab.mc import combine_se
from projlab.momentlab import (
    MonomialSpec,
    alternating_pair_sum,
    alternating_weight_sum,
    closed_cycle_monomial,
    exceptional_case_value,
    gaussian_replacement_gap,
    gram_norm_moment,
    moment_decay_diagnostic,
)
from projlab.polyapprox import build_psi, psi_eval, _pairs

WORKERS = int(os.environ.get("PROJLAB_ACCEPTANCE_WORKERS", "2"))


def _announce(name, detail=""):
    print(f"ACCEPTANCE {name}: PASS {detail}")


# ---------------------------------------------------------------------------
# c01: Gaussian exactness suite
# ---------------------------------------------------------------------------


def test_c01_gaussian_exactness():
    t0 = time.perf_counter()
    # (i) shared-direction mean-square functional is zero per draw
    for d in (16, 64):
        spec = gaussian(d)
        rng = np.random.default_rng(201)
        beta = sample_direction(d, rng)
        w = make_w_batch(beta, 1.0, rng.standard_normal((2000, d)))
        weights = np.exp(log_density(spec, w) - gaussian_log_density(w))
        assert np.all(weights == 1.0)  # bitwise
        r1, r2 = weights[:1000], weights[1000:]
        assert np.max(np.abs(r1 * r2 - 2.0 * r1 + 1.0)) == 0.0  # zero per draw
        for x in (0.0, 1.0, 2.0):
            est = marginal_mse(spec, x, reps=5000, rng=np.random.default_rng(202))
            assert est.value == 0.0 and est.se == 0.0
    # (ii) reference-IS weights are exactly one
    for d in (16, 64):
        rng = np.random.default_rng(203)
        beta = sample_direction(d, rng)
        est = estimate_gauss_is(gaussian(d), beta, 1.0, 5000, rng)
        assert est.h_hat[0] == 1.0 and est.n_eff[0] == 5000
    # (iii) ratio functionals centered at zero, 4 SEs
    for d, x in itertools.product((16, 64), (0.0, 1.0, 2.0)):
        spec = gaussian(d)
        rng = np.random.default_rng(204)
        a = mean_linearity_gap(spec, x, reps=100_000, rng=rng)
        assert abs(a.value) <= 4 * a.se, ("a", d, x, a)
        b1 = chain_moment_gap(spec, 2, 1, (0, 2), x, reps=100_000, rng=rng)
        assert abs(b1.value) <= 4 * b1.se, ("B l=2", d, x, b1)
        b2 = chain_moment_gap(spec, 4, 2, (0, 2, 4), x, reps=100_000, rng=rng)
        assert abs(b2.value) <= 4 * b2.se, ("B l=4", d, x, b2)
        c = cycle_moment_gap(spec, 4, x, reps=100_000, rng=rng)
        assert abs(c.value) <= 4 * c.se, ("C", d, x, c)
    _announce("c01 gaussian-exactness", f"({time.perf_counter() - t0:.0f}s)")


# ---------------------------------------------------------------------------
# c02: density-ratio normalization
# ---------------------------------------------------------------------------


def test_c02_density_ratio_normalization():
    for k, d in itertools.product((1, 2, 4), (16, 64)):
        est = chain_moment_gap(
            gaussian(d), k, 0, (0,), x=1.0, reps=100_000, rng=np.random.default_rng(300 + k)
        )  # m = 0 chain: E[ratio] - 1
        assert abs(est.value) <= 4 * est.se, (k, d, est)
    _announce("c02 ratio-normalization")


# ---------------------------------------------------------------------------
# c03: polynomial correctness
# ---------------------------------------------------------------------------


def _fd_coefficient(k, d, x, mono, pairs, h=1e-4):
    def ratio_at(vals):
        e = np.zeros((k, k))
        for (i, j), v in zip(pairs, vals):
            e[i - 1, j - 1] = v
            e[j - 1, i - 1] = v
        return density_ratio(GramDeviation(k=k, s_minus_i=e, d=d), x)

    nv = len(pairs)
    zero = [0.0] * nv
    if mono.degree == 0:
        return ratio_at(zero)
    if mono.degree == 1:
        vi = pairs.index(mono.factors[0])
        vp, vm = zero.copy(), zero.copy()
        vp[vi], vm[vi] = h, -h
        return (ratio_at(vp) - ratio_at(vm)) / (2 * h)
    f1, f2 = mono.factors
    if f1 == f2:
        vi = pairs.index(f1)
        vp, vm = zero.copy(), zero.copy()
        vp[vi], vm[vi] = h, -h
        return (ratio_at(vp) - 2 * ratio_at(zero) + ratio_at(vm)) / (h * h) / 2.0
    i1, i2 = pairs.index(f1), pairs.index(f2)
    acc = 0.0
    for s1, s2 in itertools.product((1, -1), (1, -1)):
        v = zero.copy()
        v[i1], v[i2] = s1 * h, s2 * h
        acc += s1 * s2 * ratio_at(v)
    return acc / (4 * h * h)


def test_c03_polynomial_correctness():
    # finite-difference oracle, k <= 2, d = 20, x in {0, 1}, 1e-5 relative
    for k, x in itertools.product((1, 2), (0.0, 1.0)):
        psi = build_psi(k, 20, x)
        pairs = _pairs(k)
        for mono, coef in psi.coefficients.items():
            fd = _fd_coefficient(k, 20, x, mono, pairs)
            assert abs(fd - coef) <= 1e-5 * max(abs(coef), 1.0), (k, x, str(mono))
    # remainder log-log slope >= k + 0.9 over norms in [1e-3, 1e-2]
    for k in (1, 2):
        psi = build_psi(k, 20, 1.0)
        rng = np.random.default_rng(400 + k)
        ts = np.logspace(-3, -2, 8)
        slopes = []
        for _ in range(30):
            e0 = rng.standard_normal((k, k))
            e0 = 0.5 * (e0 + e0.T)
            e0 /= np.abs(np.linalg.eigvalsh(e0)).max()
            logs = []
            for t in ts:
                g = GramDeviation(k=k, s_minus_i=t * e0, d=20)
                rem = abs(density_ratio(g, 1.0) - psi_eval(psi, g, warn_region=False))
                logs.append(math.log(rem) if rem > 0 else -math.inf)
            if all(np.isfinite(logs)):
                slopes.append(np.polyfit(np.log(ts), logs, 1)[0])
        assert len(slopes) >= 20
        assert min(slopes) >= k + 0.9, (k, min(slopes))
    # permutation-symmetric coefficients at k = 4 within 1e-8
    psi4 = build_psi(4, 64, 1.0)
    coefs = psi4.coefficients
    for perm in itertools.permutations((1, 2, 3, 4)):
        for mono, c in coefs.items():
            relabeled = MonomialSpec(4, tuple((perm[i - 1], perm[j - 1]) for i, j in mono.factors))
            assert abs(coefs[relabeled] - c) <= 1e-8
    _announce("c03 polynomial-correctness")


# ---------------------------------------------------------------------------
# c04: Gaussian-replacement exceptional cases + exact cancellation
# ---------------------------------------------------------------------------


def test_c04_replacement_exceptional_cases():
    for case in ("a", "b", "c"):
        for d in (16, 64):
            assert exceptional_case_value(gaussian(d), case) == 0.0  # exact zeros
    shapes = {
        "a": MonomialSpec(4, ((1, 1),)),
        "b": MonomialSpec(4, ((1, 2),)),
        "c": MonomialSpec(4, ((1, 2), (1, 2))),
    }
    g = closed_cycle_monomial(4, 2)
    for d in (16, 64):
        for case, h in shapes.items():
            gap = gaussian_replacement_gap(
                gaussian(d), g, h, reps=100_000, rng=np.random.default_rng(500 + d)
            )
            assert gap.case == case
            assert gap.analytic == 0.0
            assert abs(gap.difference.value - gap.analytic) <= 4 * gap.difference.se, (case, d, gap)
    assert alternating_weight_sum(4) == 0
    assert alternating_pair_sum(4) == 0
    assert alternating_weight_sum(4) == -4 * sum(math.comb(3, j) * (-1) ** j for j in range(4))
    assert alternating_pair_sum(4) == sum(math.comb(2, j) * (-1) ** j for j in range(3))
    _announce("c04 replacement-exceptional-cases")


# ---------------------------------------------------------------------------
# c05: condition diagnostics
# ---------------------------------------------------------------------------


def test_c05_condition_diagnostics():
    quad = [MonomialSpec(4, ((1, 2), (1, 2))), MonomialSpec(4, ((1, 2), (1, 2), (3, 4), (3, 4)))]
    linear = [MonomialSpec(4, ((1, 2),)), MonomialSpec(4, ((1, 2), (2, 3)))]
    for d in (16, 64, 256):
        spec = gaussian(d)
        rng = np.random.default_rng(600 + d)
        for mono in quad:
            diag = moment_decay_diagnostic(spec, mono, reps=100_000, rng=rng, norm_reps=2000)
            est = diag.scaled_moment
            assert abs(est.value - 1.0) <= 4 * est.se, ("quad", d, str(mono), est)
        for mono in linear:
            diag = moment_decay_diagnostic(spec, mono, reps=100_000, rng=rng, norm_reps=2000)
            est = diag.scaled_moment
            assert abs(est.value) <= 4 * est.se, ("lin", d, str(mono), est)
    norms = {
        d: gram_norm_moment(gaussian(d), k=4, reps=30_000, rng=np.random.default_rng(700 + d))
        for d in (16, 64, 256)
    }
    for lo, hi in [(16, 64), (64, 256), (16, 256)]:
        gap = norms[hi].value - norms[lo].value
        assert gap <= 4 * combine_se(norms[lo].se, norms[hi].se), (lo, hi, norms)
    _announce(
        "c05 condition-diagnostics",
        "norm moments: " + ", ".join(f"d={d}: {e.value:.1f}" for d, e in norms.items()),
    )


# ---------------------------------------------------------------------------
# c06: the dimension-sweep trend suite (long pole)
# ---------------------------------------------------------------------------


def _null_fracs(verdict, d, eps):
    rows = [
        r for r in verdict.sweep_rows
        if r[0] == "gaussian" and r[1] == d and r[3] == "grid" and r[4] == eps
    ]
    e1 = np.array([r[7] for r in rows])
    e2 = np.array([r[8] for r in rows])
    n = len(rows)
    return (
        float(e1.mean()), float(e2.mean()),
        math.sqrt(e1.mean() * (1 - e1.mean()) / n),
        math.sqrt(e2.mean() * (1 - e2.mean()) / n),
    )


@pytest.fixture(scope="module")
def theorem_runs(tmp_path_factory):
    t0 = time.perf_counter()
    uniform_cfg = ExperimentConfig(
        family="product-uniform",
        d_list=[8, 32, 128, 512],
        n_betas=200,
        eps_list=[1.5, 2.5],
        seed=20_240,
        cal_n_betas=100,  # floors are quantiles; 100 null directions suffice
        workers=WORKERS,
        out_dir=str(tmp_path_factory.mktemp("uniform_sweep")),
    )
    uniform = run_theorem_sweep(uniform_cfg, progress=lambda m: print("  " + m, flush=True))
    t1 = time.perf_counter()
    print(f"  uniform sweep done in {t1 - t0:.0f}s", flush=True)
    shell_cfg = ExperimentConfig(
        family="spherical-shell-mixture",
        family_params={"radii": (0.25, 1.55), "dof": 64},
        d_list=[8, 32, 128, 512],
        n_betas=100,
        n_slices=8,
        eps_list=[4.0],
        seed=20_241,
        workers=WORKERS,
        out_dir=str(tmp_path_factory.mktemp("shell_sweep")),
    )
    shell = run_theorem_sweep(shell_cfg, progress=lambda m: print("  " + m, flush=True))
    t2 = time.perf_counter()
    print(f"  shell sweep done in {t2 - t1:.0f}s", flush=True)
    return uniform, shell, t2 - t0


def test_c06_theorem_trend_suite(theorem_runs):
    uniform, shell, elapsed = theorem_runs
    d_list = [8, 32, 128, 512]
    # product-uniform: non-increasing exceedance, terminal value at the null
    for eps in (1.5, 2.5):
        rows = {r[1]: r for r in uniform.rows if r[2] == eps}
        fr1 = [rows[d][3] for d in d_list]
        fr2 = [rows[d][4] for d in d_list]
        se1 = [rows[d][5] for d in d_list]
        se2 = [rows[d][6] for d in d_list]
        for i in range(3):
            slack1 = 2 * combine_se(se1[i], se1[i + 1])
            slack2 = 2 * combine_se(se2[i], se2[i + 1])
            assert fr1[i + 1] <= fr1[i] + slack1, ("mean trend", eps, d_list[i + 1], fr1)
            assert fr2[i + 1] <= fr2[i] + slack2, ("var trend", eps, d_list[i + 1], fr2)
        n1, n2, nse1, nse2 = _null_fracs(uniform, 512, eps)
        assert abs(fr1[-1] - n1) <= 2 * combine_se(se1[-1], nse1) + 1e-12, (eps, fr1[-1], n1)
        assert abs(fr2[-1] - n2) <= 2 * combine_se(se2[-1], nse2) + 1e-12, (eps, fr2[-1], n2)
        print(f"  uniform eps={eps}: mean fracs {fr1}, var fracs {fr2}")
    # shell: mean clause at the null floor, variance clause above it, at all d
    rows = {r[1]: r for r in shell.rows if r[2] == 4.0}
    for d in d_list:
        _, d_row = d, rows[d]
        fr_mean, fr_var, se_mean, se_var = d_row[3], d_row[4], d_row[5], d_row[6]
        n1, n2, nse1, nse2 = _null_fracs(shell, d, 4.0)
        assert abs(fr_mean - n1) <= 2 * combine_se(se_mean, nse1) + 1e-12, ("shell mean", d, fr_mean, n1)
        assert fr_var >= 0.5, ("shell var", d, fr_var)
        assert fr_var - n2 > 2 * combine_se(se_var, nse2), ("shell var above null", d, fr_var, n2)
    print(f"  shell eps=4.0: mean fracs {[rows[d][3] for d in d_list]}, "
          f"var fracs {[rows[d][4] for d in d_list]}")
    assert elapsed <= 3600, f"runtime target exceeded: {elapsed:.0f}s"
    _announce("c06 theorem-trend-suite", f"({elapsed:.0f}s total)")


# ---------------------------------------------------------------------------
# c07: cross-estimator agreement
# ---------------------------------------------------------------------------


def _norm2_and_se(mu, m2, n_eff):
    norm2 = float(mu @ mu)
    norm = math.sqrt(norm2)
    u = mu / norm if norm > 1e-12 else np.ones_like(mu) / math.sqrt(mu.size)
    var_t = max(float(u @ m2 @ u) - float(u @ mu) ** 2, 0.0)
    frob2 = max(float((m2 * m2).sum()) - 2.0 * float(mu @ m2 @ mu) + norm2 * norm2, 0.0)
    se = math.sqrt(4.0 * norm2 * var_t / n_eff + 2.0 * frob2 / (n_eff * n_eff))
    return norm2, se


def test_c07_cross_estimator_agreement():
    d = 32
    spec = product_uniform(d)
    checked = 0
    for pair in range(20):
        rng = np.random.default_rng(800 + pair)
        beta = sample_direction(d, rng)
        z = sample(spec, 100_000, rng)
        sl = estimate_slicing(z, beta, n_slices=47)
        s = int(rng.integers(5, 42))  # a slice away from the extremes
        x = float(sl.x_grid[s])
        gi = estimate_gauss_is(spec, beta, x, m=2_000_000, rng=rng)
        if gi.n_eff[0] < 100:  # degenerate-weight filter
            continue
        v_sl, se_sl = _norm2_and_se(sl.mu_hat[s], sl.m2_hat[s], sl.n_eff[s])
        v_gi, se_gi = _norm2_and_se(gi.mu_hat[0], gi.m2_hat[0], gi.n_eff[0])
        assert abs(v_sl - v_gi) <= 4 * combine_se(se_sl, se_gi), (pair, x, v_sl, v_gi, se_sl, se_gi)
        checked += 1
    assert checked >= 15  # weight filter may drop a few extreme-x pairs
    _announce("c07 cross-estimator-agreement", f"({checked}/20 pairs usable)")


# ---------------------------------------------------------------------------
# c08: applications
# ---------------------------------------------------------------------------


def test_c08_applications():
    rng = np.random.default_rng(900)
    d = 20
    for link in ("linear", "cubic"):
        z = sample(gaussian(d), 2000, rng)
        beta = sample_direction(d, rng).beta
        y = simulate_link_response(z, beta, link, 0.2, rng)
        assert alignment(sir_estimate(y, z), beta) >= 0.9, link
    z = sample(gaussian(d), 4000, rng)
    beta = sample_direction(d, rng).beta
    y = simulate_link_response(z, beta, "square", 0.2, rng)
    assert alignment(sir_estimate(y, z), beta) < 0.3
    assert alignment(save_estimate(y, z), beta) >= 0.9
    # sparse projection check over 20 random cases
    for case_idx in range(20):
        crng = np.random.default_rng(910 + case_idx)
        dd = 12
        a = crng.standard_normal((dd, dd)) / math.sqrt(dd)
        m = np.eye(dd) + 0.25 * (a + a.T)
        w, v = np.linalg.eigh(m @ m.T)
        case = SparseModelCase(theta=crng.standard_normal(dd), m_root=(v * np.sqrt(w)) @ v.T)
        res = sparse_submodel_check(case, gaussian(dd), 100_000, crng)
        assert abs(res.c_hat - res.c_theory) <= 4 * res.c_se, (case_idx, res.c_hat, res.c_theory)
    theta = np.array([1.3, -0.2, 0.7, 0.1])
    res = sparse_submodel_check(
        SparseModelCase(theta=theta, m_root=np.eye(4)), gaussian(4), 20_000,
        np.random.default_rng(990),
    )
    assert res.c_theory == theta[0]  # exactly
    _announce("c08 applications")


# ---------------------------------------------------------------------------
# c09: determinism
# ---------------------------------------------------------------------------


def test_c09_determinism(tmp_path):
    out = {}
    for tag in ("first", "second"):
        cfg = ExperimentConfig(
            family="product-uniform", d_list=[8, 16], n_betas=5, n_samples=5000,
            n_slices=8, eps_list=[1.5], seed=77, cal_n_betas=5,
            out_dir=str(tmp_path / tag),
        )
        run_theorem_sweep(cfg)
        pcfg = ProofConfig(
            family="product-uniform", d_list=[8], x_list=[0.0, 1.0], reps=5000,
            seed=78, out_dir=str(tmp_path / tag),
        )
        run_proof_sweep(pcfg)
        out[tag] = {
            name: (tmp_path / tag / name).read_bytes()
            for name in ("theorem_sweep.csv", "verdict.csv", "null_floors.csv", "proof_sweep.csv")
        }
    for name in out["first"]:
        assert out["first"][name] == out["second"][name], name
    _announce("c09 determinism")
