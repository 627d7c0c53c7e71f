"""Sweep orchestration: dimension sweeps, null-floor calibration, CSV output.

A theorem sweep draws directions uniformly at each dimension, estimates the
deviation curves per direction, and aggregates exceedance fractions (the
empirical share of directions whose deviations stay below threshold is the
measured analogue of the good-direction set growing to full sphere measure).

Because the deviation estimators carry dimension-dependent noise, thresholds
are expressed as multipliers of a calibrated noise floor: the configured
quantile of the same statistic under the Gaussian law at identical budgets.
Disabling calibration makes thresholds absolute.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gaussratio, polyapprox
from .deviations import deviation_d1, deviation_d2
from .distributions import DistributionSpec, make_spec, sample
from .estimators import default_n_slices, estimate_slicing_streamed, estimate_kernel
from .geometry import sample_direction
from .momentlab import MonomialSpec
from .streams import task_rng, task_seedseq

__all__ = [
    "ExperimentConfig",
    "TheoremVerdict",
    "run_theorem_sweep",
    "run_proof_sweep",
    "format_float",
    "write_csv",
    "THEOREM_SWEEP_COLUMNS",
    "PROOF_SWEEP_COLUMNS",
    "VERDICT_COLUMNS",
]

THEOREM_SWEEP_COLUMNS = [
    "family", "d", "beta_index", "x_mode", "eps",
    "sup_d1", "sup_d2", "exceed_d1", "exceed_d2", "n_eff_min", "seed",
]
PROOF_SWEEP_COLUMNS = [
    "family", "functional", "k", "l", "m", "j_indices", "d", "x", "estimate", "se", "reps", "seed",
]
VERDICT_COLUMNS = [
    "family", "d", "eps", "frac_exceed_d1", "frac_exceed_d2",
    "se_frac_d1", "se_frac_d2", "n_betas",
]
FLOOR_COLUMNS = ["family", "d", "mode", "quantile", "floor_d1", "floor_d2"]

_PHASE_CAL = 0
_PHASE_MAIN = 1


def format_float(v) -> str:
    """17 significant digits; deterministic across runs."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return "nan"
    return f"{f:.17g}"


def write_csv(path, columns: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else format_float(v) for v in row])


@dataclass
class ExperimentConfig:
    family: str
    d_list: list[int]
    n_betas: int = 200
    seed: int = 0
    family_params: dict = field(default_factory=dict)
    n_samples: int | None = None  # None: max(100_000, 200*d)
    n_slices: int | None = None  # None: ceil(n^(1/3)) clamped to [8, 50]
    eps_list: list[float] = field(default_factory=lambda: [1.5, 2.5])
    x_range: float = 2.5
    estimator: str = "slicing"
    bandwidth: float | None = None  # kernel only; None: Silverman
    n_grid: int = 25  # kernel only
    random_x_draws: int = 64
    calibrate: bool = True
    cal_quantile: float = 0.95
    cal_n_betas: int | None = None
    workers: int = 1
    out_dir: str = "."
    chunk: int = 32_768

    def __post_init__(self):
        if not self.d_list:
            raise ValueError("config key d_list must be a nonempty list")
        if any(b <= a for a, b in zip(self.d_list, self.d_list[1:])):
            raise ValueError("config key d_list must be strictly increasing")
        if not self.eps_list:
            raise ValueError("config key eps_list must be nonempty")
        if self.n_betas < 1:
            raise ValueError("config key n_betas must be positive")
        if self.n_samples is not None and self.n_samples < 1:
            raise ValueError("config key n_samples must be positive")
        if self.estimator not in ("slicing", "kernel"):
            raise ValueError("config key estimator must be 'slicing' or 'kernel'")

    def budget(self, d: int) -> int:
        return self.n_samples if self.n_samples else max(100_000, 200 * d)

    def slices(self, n: int) -> int:
        return self.n_slices if self.n_slices else default_n_slices(n)

    def spec(self, d: int) -> DistributionSpec:
        return make_spec(self.family, d, **self.family_params)


@dataclass
class TheoremVerdict:
    """Grid-mode exceedance fractions per (d, eps) plus per-d medians."""

    rows: list  # tuples in VERDICT_COLUMNS order
    floors: dict  # (d, mode) -> (floor_d1, floor_d2)
    median_sup: dict  # d -> (median sup_d1, median sup_d2)
    random_fractions: dict  # (d, eps) -> (mean frac d1, mean frac d2)
    sweep_rows: list  # tuples in THEOREM_SWEEP_COLUMNS order
    failures: dict  # (family, d) -> count of degenerate directions


def _beta_task(args):
    """Per-direction work unit; top level so process pools can pickle it."""
    (family, family_params, d, d_idx, beta_idx, phase, n, n_slices, estimator,
     bandwidth, n_grid, x_range, r_draws, seed, chunk) = args
    spec = make_spec(family, d, **family_params)
    rng_dir = task_rng(seed, phase, d_idx, beta_idx, 0)
    beta = sample_direction(d, rng_dir)
    try:
        if estimator == "slicing":
            est = estimate_slicing_streamed(
                spec, beta, n, n_slices, task_seedseq(seed, phase, d_idx, beta_idx, 1), chunk=chunk
            )
        else:
            rng_s = task_rng(seed, phase, d_idx, beta_idx, 1)
            z = sample(spec, n, rng_s)
            bw = bandwidth if bandwidth else 1.06 * n ** (-0.2)
            grid = np.linspace(-x_range, x_range, n_grid)
            est = estimate_kernel(z, beta, bw, grid)
        if est.degenerate or not est.defined.any():
            raise ValueError("estimator degenerate for this direction")
    except ValueError:
        # missing record: counted by the sweep, never silently zero-filled
        nanarr = np.full(r_draws, np.nan)
        return beta_idx, float("nan"), float("nan"), nanarr, nanarr, 0.0
    d1, _se1 = deviation_d1(est)
    d2, _se2 = deviation_d2(est, beta, tol=1e-2, with_se=False)
    keep = np.isfinite(d1) & (np.abs(est.x_grid) <= x_range)
    sup1 = float(np.max(d1[keep])) if keep.any() else float("nan")
    keep2 = np.isfinite(d2) & (np.abs(est.x_grid) <= x_range)
    sup2 = float(np.max(d2[keep2])) if keep2.any() else float("nan")
    rng_x = task_rng(seed, phase, d_idx, beta_idx, 2)
    zx = sample(spec, r_draws, rng_x)
    x_draws = zx @ beta.beta
    idx = est.slice_of(x_draws)
    rand_d1 = d1[idx]
    rand_d2 = d2[idx]
    n_eff_min = float(np.min(est.n_eff[est.defined])) if est.defined.any() else 0.0
    return beta_idx, sup1, sup2, rand_d1, rand_d2, n_eff_min


def _run_phase(cfg: ExperimentConfig, phase: int, family: str, family_params: dict,
               n_betas: int, progress=None):
    """Run all (d, beta) tasks for one phase; returns per-d result lists."""
    results = {}
    tasks = []
    for d_idx, d in enumerate(cfg.d_list):
        n = cfg.budget(d)
        n_slices = cfg.slices(n)
        for b in range(n_betas):
            tasks.append((family, family_params, d, d_idx, b, phase, n, n_slices,
                          cfg.estimator, cfg.bandwidth, cfg.n_grid, cfg.x_range,
                          cfg.random_x_draws, cfg.seed, cfg.chunk))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(_beta_task, tasks, chunksize=1))
    else:
        outs = []
        for i, t in enumerate(tasks):
            outs.append(_beta_task(t))
            if progress and (i + 1) % 25 == 0:
                progress(f"phase {phase}: {i + 1}/{len(tasks)} directions")
    per_beta = n_betas
    for d_idx, d in enumerate(cfg.d_list):
        chunk = outs[d_idx * per_beta : (d_idx + 1) * per_beta]
        results[d] = sorted(chunk, key=lambda r: r[0])
    return results


def run_theorem_sweep(cfg: ExperimentConfig, progress=None, write: bool = True) -> TheoremVerdict:
    """Dimension sweep of deviation exceedances with optional null calibration.

    Writes theorem_sweep.csv (per-direction rows, grid and random-x modes),
    verdict.csv (grid-mode fractions) and null_floors.csv when calibrating.
    """
    spec_check = cfg.spec(max(cfg.d_list))  # validates family/params early
    del spec_check
    floors = {}
    sweep_rows = []
    cal_rows_data = None
    if cfg.calibrate:
        cal_n = cfg.cal_n_betas or cfg.n_betas
        cal = _run_phase(cfg, _PHASE_CAL, "gaussian", {}, cal_n, progress)
        for d in cfg.d_list:
            sups1 = np.array([r[1] for r in cal[d]])
            sups2 = np.array([r[2] for r in cal[d]])
            rand1 = np.concatenate([r[3] for r in cal[d]])
            rand2 = np.concatenate([r[4] for r in cal[d]])
            q = cfg.cal_quantile
            floors[(d, "grid")] = (
                float(np.nanquantile(sups1, q)), float(np.nanquantile(sups2, q))
            )
            floors[(d, "random")] = (
                float(np.nanquantile(rand1, q)), float(np.nanquantile(rand2, q))
            )
        cal_rows_data = cal
    one = {(d, mode): (1.0, 1.0) for d in cfg.d_list for mode in ("grid", "random")}
    eff_floors = floors if cfg.calibrate else one

    main = _run_phase(cfg, _PHASE_MAIN, cfg.family, cfg.family_params, cfg.n_betas, progress)

    failures = {}

    def emit_rows(family, data, n_betas):
        rows = []
        frac_acc = {}
        for d in cfg.d_list:
            f1g, f2g = eff_floors[(d, "grid")]
            f1r, f2r = eff_floors[(d, "random")]
            for (b, sup1, sup2, rand_d1, rand_d2, n_eff_min) in data[d]:
                missing = not (math.isfinite(sup1) and math.isfinite(sup2))
                if missing:
                    failures[(family, d)] = failures.get((family, d), 0) + 1
                for eps in cfg.eps_list:
                    if missing:
                        e1g = e2g = e1r = e2r = float("nan")
                    else:
                        e1g = float(sup1 > eps * f1g)
                        e2g = float(sup2 > eps * f2g)
                        ok1 = np.isfinite(rand_d1)
                        ok2 = np.isfinite(rand_d2)
                        e1r = float(np.mean(rand_d1[ok1] > eps * f1r)) if ok1.any() else float("nan")
                        e2r = float(np.mean(rand_d2[ok2] > eps * f2r)) if ok2.any() else float("nan")
                    rows.append((family, d, b, "grid", eps, sup1, sup2, e1g, e2g,
                                 n_eff_min, cfg.seed))
                    rows.append((family, d, b, "random", eps, sup1, sup2, e1r, e2r,
                                 n_eff_min, cfg.seed))
                    if not missing:
                        frac_acc.setdefault((d, eps), []).append((e1g, e2g, e1r, e2r))
        return rows, frac_acc

    # For a gaussian main run the main rows already are the null emission;
    # emitting the calibration phase too would duplicate (family, d, beta)
    # keys and break fraction recomputation from the raw CSV.
    if cal_rows_data is not None and cfg.family != "gaussian":
        rows, _ = emit_rows("gaussian", cal_rows_data, cfg.cal_n_betas or cfg.n_betas)
        sweep_rows.extend(rows)
    rows, frac_acc = emit_rows(cfg.family, main, cfg.n_betas)
    sweep_rows.extend(rows)

    verdict_rows = []
    random_fractions = {}
    for d in cfg.d_list:
        n_missing = failures.get((cfg.family, d), 0)
        if n_missing and progress:
            progress(f"d={d}: {n_missing} degenerate direction(s) dropped from fractions")
        for eps in cfg.eps_list:
            vals = np.array(frac_acc.get((d, eps), []))
            if vals.size == 0:
                verdict_rows.append((cfg.family, d, eps, float("nan"), float("nan"),
                                     float("nan"), float("nan"), 0))
                random_fractions[(d, eps)] = (float("nan"), float("nan"))
                continue
            p1 = float(np.mean(vals[:, 0]))
            p2 = float(np.mean(vals[:, 1]))
            nb = len(vals)  # successful directions only
            se1 = math.sqrt(p1 * (1 - p1) / nb)
            se2 = math.sqrt(p2 * (1 - p2) / nb)
            verdict_rows.append((cfg.family, d, eps, p1, p2, se1, se2, nb))
            random_fractions[(d, eps)] = (
                float(np.nanmean(vals[:, 2])), float(np.nanmean(vals[:, 3]))
            )
    median_sup = {
        d: (
            float(np.nanmedian([r[1] for r in main[d]])),
            float(np.nanmedian([r[2] for r in main[d]])),
        )
        for d in cfg.d_list
    }

    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_csv(os.path.join(cfg.out_dir, "theorem_sweep.csv"), THEOREM_SWEEP_COLUMNS, sweep_rows)
        write_csv(os.path.join(cfg.out_dir, "verdict.csv"), VERDICT_COLUMNS, verdict_rows)
        if cfg.calibrate:
            floor_rows = [
                ("gaussian", d, mode, cfg.cal_quantile, f1, f2)
                for (d, mode), (f1, f2) in sorted(floors.items())
            ]
            write_csv(os.path.join(cfg.out_dir, "null_floors.csv"), FLOOR_COLUMNS, floor_rows)
    return TheoremVerdict(
        rows=verdict_rows,
        floors=eff_floors,
        median_sup=median_sup,
        random_fractions=random_fractions,
        sweep_rows=sweep_rows,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# proof-functional sweep
# ---------------------------------------------------------------------------


@dataclass
class ProofConfig:
    family: str
    d_list: list[int]
    x_list: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0])
    functionals: list[dict] = field(default_factory=lambda: [
        {"name": "marginal-mse"},
        {"name": "marginal-mse-iid"},
        {"name": "linearity-gap"},
        {"name": "chain", "l": 2, "m": 1, "j": [0, 2]},
        {"name": "cycle", "k": 4},
    ])
    reps: int = 100_000
    scale_reps_with_d: bool = True
    seed: int = 0
    family_params: dict = field(default_factory=dict)
    out_dir: str = "."

    def __post_init__(self):
        if not self.d_list:
            raise ValueError("config key d_list must be a nonempty list")
        if not self.functionals:
            raise ValueError("config key functionals must be nonempty")

    def reps_at(self, d: int) -> int:
        if not self.scale_reps_with_d:
            return self.reps
        return int(self.reps * max(1, d // max(min(self.d_list), 1)))


def _eval_functional(spec, fn: dict, x: float, reps: int, rng):
    name = fn["name"]
    if name == "marginal-mse":
        est = gaussratio.marginal_mse(spec, x, reps, rng)
        meta = {"k": 2, "l": "", "m": "", "j": ""}
    elif name == "marginal-mse-iid":
        est = gaussratio.marginal_mse_iid(spec, x, reps, rng)
        meta = {"k": 2, "l": "", "m": "", "j": ""}
    elif name == "linearity-gap":
        est = gaussratio.mean_linearity_gap(spec, x, reps, rng)
        meta = {"k": 2, "l": 2, "m": 1, "j": "0-2"}
    elif name == "chain":
        l, m, j = fn["l"], fn["m"], tuple(fn["j"])
        est = gaussratio.chain_moment_gap(spec, l, m, j, x, reps, rng)
        meta = {"k": l, "l": l, "m": m, "j": "-".join(map(str, j))}
    elif name == "chain-poly":
        l, m, j = fn["l"], fn["m"], tuple(fn["j"])
        est = polyapprox.chain_moment_gap_poly(spec, l, m, j, x, reps, rng)
        meta = {"k": l, "l": l, "m": m, "j": "-".join(map(str, j))}
    elif name == "cycle":
        k = fn["k"]
        est = gaussratio.cycle_moment_gap(spec, k, x, reps, rng)
        meta = {"k": k, "l": "", "m": "", "j": ""}
    elif name == "cycle-poly":
        k = fn["k"]
        est = polyapprox.cycle_moment_gap_poly(spec, k, x, reps, rng)
        meta = {"k": k, "l": "", "m": "", "j": ""}
    elif name == "poly-error":
        k = fn["k"]
        mono = MonomialSpec(k, tuple(tuple(p) for p in fn.get("monomial", [])))
        est = polyapprox.poly_error_moment(spec, mono, x, reps, rng)
        meta = {"k": k, "l": "", "m": "", "j": str(mono)}
    else:
        raise ValueError(f"unknown functional {name!r}")
    return est, meta


def run_proof_sweep(cfg: ProofConfig, progress=None, write: bool = True) -> list[tuple]:
    """Evaluate the configured functionals over (d, x); returns/writes rows."""
    rows = []
    for fi, fn in enumerate(cfg.functionals):
        for di, d in enumerate(cfg.d_list):
            spec = make_spec(cfg.family, d, **cfg.family_params)
            reps = cfg.reps_at(d)
            for xi, x in enumerate(cfg.x_list):
                rng = task_rng(cfg.seed, 2, fi, di, xi)
                est, meta = _eval_functional(spec, fn, x, reps, rng)
                rows.append((cfg.family, fn["name"], meta["k"], meta["l"], meta["m"],
                             meta["j"], d, x, est.value, est.se, est.reps, cfg.seed))
                if progress:
                    progress(f"{fn['name']} d={d} x={x}: {est.value:.3e} +- {est.se:.1e}")
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_csv(os.path.join(cfg.out_dir, "proof_sweep.csv"), PROOF_SWEEP_COLUMNS, rows)
    return rows
