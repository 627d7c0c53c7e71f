"""Command-line entry point: parse config, dispatch sweeps, write outputs.

Subcommands: theorem, proof, moments, ratio, psi, apps.  A TOML config file
supplies per-subcommand sections; command-line flags override file keys.  One
root seed drives everything through documented substream paths (subcommand ->
dimension -> direction -> replicate block).  Every run ends by writing
manifest.json listing the emitted files with content digests.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import __version__
from .applications import (
    SparseModelCase,
    save_estimate,
    simulate_link_response,
    sir_estimate,
    sparse_submodel_check,
    alignment,
)
from .distributions import make_spec
from .experiments import (
    ExperimentConfig,
    ProofConfig,
    format_float,
    run_proof_sweep,
    run_theorem_sweep,
    write_csv,
)
from .gaussratio import GramDeviation, density_ratio
from .geometry import sample_direction
from .momentlab import (
    MonomialSpec,
    cycle_coupling_diagnostic,
    gaussian_replacement_gap,
    moment_decay_diagnostic,
)
from .polyapprox import build_psi, export_coefficients_csv
from .streams import task_rng

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

SIR_SAVE_COLUMNS = ["family", "d", "n", "link", "method", "alignment", "seed"]
SPARSE_COLUMNS = [
    "family", "d", "n", "c_hat", "c_theory", "max_mean_dev", "max_var_dev", "null_floor", "seed",
]


class ConfigError(Exception):
    pass


def _load_config(path: str | None, section: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}")
    out = dict(doc.get("common", {}))
    out.update(doc.get(section, {}))
    return out


def _merge(cfg: dict, overrides: dict) -> dict:
    out = dict(cfg)
    for k, v in overrides.items():
        if v is not None:
            out[k] = v
    return out


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key: {key}")
    return cfg[key]


def _build_config(cls):
    """Constructor wrapper mapping validation errors to config errors."""

    def build(*a, **kw):
        try:
            return cls(*a, **kw)
        except ValueError as e:
            raise ConfigError(str(e))

    return build


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class _Run:
    """Collects emitted files and writes the manifest last."""

    def __init__(self, out_dir: str, seed: int, workers: int, config_echo: dict, quiet: bool):
        self.out_dir = out_dir
        self.seed = seed
        self.workers = workers
        self.config_echo = config_echo
        self.quiet = quiet
        self.outputs: list[str] = []
        self.started = datetime.datetime.now(datetime.timezone.utc).isoformat()
        os.makedirs(out_dir, exist_ok=True)

    def log(self, msg: str):
        if not self.quiet:
            print(msg, file=sys.stderr)

    def emit(self, name: str) -> str:
        path = os.path.join(self.out_dir, name)
        self.outputs.append(path)
        return path

    def finish(self) -> None:
        manifest = {
            "artifact_version": __version__,
            "config": self.config_echo,
            "seed": self.seed,
            "workers": self.workers,
            "started": self.started,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "outputs": [
                {"path": os.path.relpath(p, self.out_dir), "sha256": _digest(p),
                 "bytes": os.path.getsize(p)}
                for p in self.outputs
            ],
        }
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--quiet", action="store_true")


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _parse_monomial(text: str, k: int) -> MonomialSpec:
    """'1,2;1,2' -> ((1,2),(1,2))."""
    pairs = []
    for part in text.split(";"):
        i, j = part.split(",")
        pairs.append((int(i), int(j)))
    return MonomialSpec(k, tuple(pairs))


def experiment_config_from_mapping(cfg: dict) -> ExperimentConfig:
    """Build the sweep config from a merged config mapping.

    The manifest echoes exactly this mapping, so a run can be reproduced
    bit-identically from its manifest at the same worker count.
    """
    family = _require(cfg, "family")
    d_list = _require(cfg, "d_list")
    return _build_config(ExperimentConfig)(
        family=family,
        d_list=list(d_list),
        n_betas=int(cfg.get("n_betas", 200)),
        seed=int(cfg.get("seed", 0)),
        family_params=dict(cfg.get("family_params", {})),
        n_samples=cfg.get("n_samples"),
        n_slices=cfg.get("n_slices"),
        eps_list=[float(e) for e in cfg.get("eps_list", [1.5, 2.5])],
        x_range=float(cfg.get("x_range", 2.5)),
        estimator=cfg.get("estimator", "slicing"),
        random_x_draws=int(cfg.get("random_x_draws", 64)),
        calibrate=bool(cfg.get("calibrate", True)),
        cal_quantile=float(cfg.get("cal_quantile", 0.95)),
        cal_n_betas=cfg.get("cal_n_betas"),
        workers=int(cfg.get("workers", 1)),
        out_dir=cfg.get("out_dir", "."),
        chunk=int(cfg.get("chunk", 32_768)),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_theorem(args) -> int:
    cfg = _merge(
        _load_config(args.config, "theorem"),
        {
            "seed": args.seed,
            "workers": args.workers,
            "out_dir": args.out_dir,
            "d_list": _int_list(args.d) if args.d else None,
            "n_betas": args.n_betas,
            "family": args.family,
            "eps_list": _float_list(args.eps) if args.eps else None,
            "n_samples": args.n_samples,
            "n_slices": args.n_slices,
        },
    )
    exp = experiment_config_from_mapping(cfg)
    run = _Run(exp.out_dir, exp.seed, exp.workers, cfg, args.quiet)
    verdict = run_theorem_sweep(exp, progress=run.log)
    run.emit("theorem_sweep.csv")
    run.emit("verdict.csv")
    if exp.calibrate:
        run.emit("null_floors.csv")
    run.finish()
    max_frac = float(cfg.get("max_degenerate_fraction", 0.05))
    worst = max(
        (count / exp.n_betas for (fam, _d), count in verdict.failures.items()
         if fam == exp.family),
        default=0.0,
    )
    if worst > max_frac:
        run.log(f"error: degenerate-direction fraction {worst:.2%} exceeds {max_frac:.2%}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_proof(args) -> int:
    cfg = _merge(
        _load_config(args.config, "proof"),
        {
            "seed": args.seed,
            "out_dir": args.out_dir,
            "d_list": _int_list(args.d) if args.d else None,
            "family": args.family,
            "reps": args.reps,
            "x_list": _float_list(args.x) if args.x else None,
        },
    )
    family = _require(cfg, "family")
    d_list = _require(cfg, "d_list")
    functionals = cfg.get("functionals")
    if args.functional:
        fn = {"name": args.functional}
        if args.k is not None:
            fn["k"] = args.k
        if args.functional in ("chain", "chain-poly"):
            fn["l"] = args.k or 2
            fn["m"] = 1
            fn["j"] = [0, fn["l"]]
        functionals = [fn]
    pc = _build_config(ProofConfig)(
        family=family,
        d_list=list(d_list),
        x_list=[float(x) for x in cfg.get("x_list", [0.0, 1.0, 2.0])],
        functionals=functionals or ProofConfig(family=family, d_list=list(d_list)).functionals,
        reps=int(cfg.get("reps", 100_000)),
        scale_reps_with_d=bool(cfg.get("scale_reps_with_d", True)),
        seed=int(cfg.get("seed", 0)),
        family_params=dict(cfg.get("family_params", {})),
        out_dir=cfg.get("out_dir", "."),
    )
    run = _Run(pc.out_dir, pc.seed, 1, cfg, args.quiet)
    run_proof_sweep(pc, progress=run.log)
    run.emit("proof_sweep.csv")
    run.finish()
    return EXIT_OK


def cmd_moments(args) -> int:
    cfg = _merge(
        _load_config(args.config, "moments"),
        {
            "seed": args.seed,
            "out_dir": args.out_dir,
            "d_list": _int_list(args.d) if args.d else None,
            "family": args.family,
            "reps": args.reps,
        },
    )
    family = _require(cfg, "family")
    d_list = _require(cfg, "d_list")
    seed = int(cfg.get("seed", 0))
    reps = int(cfg.get("reps", 50_000))
    k = int(cfg.get("k", args.k or 4))
    condition = cfg.get("condition", args.condition or "first-moment-decay")
    out_dir = cfg.get("out_dir", ".")
    run = _Run(out_dir, seed, 1, cfg, args.quiet)
    rows = []
    for di, d in enumerate(d_list):
        spec = make_spec(family, int(d), **dict(cfg.get("family_params", {})))
        rng = task_rng(seed, 3, di)
        if condition == "first-moment-decay":
            mono = _parse_monomial(cfg.get("monomial", args.monomial or "1,2;1,2"), k)
            diag = moment_decay_diagnostic(spec, mono, reps, rng)
            rows.append((family, condition, str(mono), d,
                         diag.scaled_moment.value, diag.scaled_moment.se, ""))
            rows.append((family, "gram-norm-moment", f"order-{2*k+1}", d,
                         diag.norm_moment.value, diag.norm_moment.se, ""))
        elif condition == "cycle-coupling":
            mono = _parse_monomial(cfg.get("monomial", args.monomial or "1,2;1,2"), k)
            g = int(cfg.get("cycle_len", args.cycle_len or 3))
            est = cycle_coupling_diagnostic(spec, g, mono, reps, rng)
            rows.append((family, condition, f"cycle{g}*{mono}", d, est.value, est.se, ""))
        elif condition == "gaussian-replacement":
            g = _parse_monomial(_require(cfg, "g_monomial"), k)
            h = _parse_monomial(_require(cfg, "h_monomial"), k)
            gap = gaussian_replacement_gap(spec, g, h, reps, rng)
            rows.append((family, condition, f"({g})x({h})", d, gap.difference.value,
                         gap.difference.se,
                         "" if gap.analytic is None else format_float(gap.analytic)))
        else:
            raise ConfigError(f"unknown condition: {condition}")
    path = run.emit("moments.csv")
    write_csv(path, ["family", "condition", "monomial", "d", "estimate", "se",
                     "analytic_value_if_any"], rows)
    for r in rows:
        run.log(f"{r[1]} {r[2]} d={r[3]}: {r[4]:.4g} +- {r[5]:.2g} {r[6]}")
    run.finish()
    return EXIT_OK


def cmd_ratio(args) -> int:
    k, d, x = args.k, args.d_dim, args.x
    if args.gram == "identity":
        e = np.zeros((k, k))
    else:
        with open(args.gram, newline="", encoding="utf-8") as fh:
            s = np.array([[float(v) for v in row] for row in csv.reader(fh)])
        e = s - np.eye(k)
    value = density_ratio(GramDeviation(k=k, s_minus_i=e, d=d), x)
    print(format_float(value))
    return EXIT_OK


def cmd_psi(args) -> int:
    psi = build_psi(args.k, args.d_dim, args.x)
    print(format_float(psi.constant_term))
    if args.out:
        export_coefficients_csv(psi, args.out)
    return EXIT_OK


def cmd_apps(args) -> int:
    cfg = _merge(
        _load_config(args.config, "apps"),
        {"seed": args.seed, "out_dir": args.out_dir},
    )
    seed = int(cfg.get("seed", 0))
    out_dir = cfg.get("out_dir", ".")
    family = cfg.get("family", args.family or "gaussian")
    run = _Run(out_dir, seed, 1, cfg, args.quiet)
    if args.app == "sir" or args.app == "save":
        d = int(cfg.get("d", args.d_dim or 20))
        n = int(cfg.get("n", args.n or (4000 if args.app == "save" else 2000)))
        link = cfg.get("link", args.link or "linear")
        spec = make_spec(family, d, **dict(cfg.get("family_params", {})))
        rng = task_rng(seed, 4, 0)
        from .distributions import sample as draw

        z = draw(spec, n, rng)
        beta = sample_direction(d, rng).beta
        y = simulate_link_response(z, beta, link, float(cfg.get("noise_sd", 0.2)), rng)
        est = sir_estimate(y, z) if args.app == "sir" else save_estimate(y, z)
        a = alignment(est, beta)
        print(format_float(a))
        path = run.emit("sir_save.csv")
        write_csv(path, SIR_SAVE_COLUMNS, [(family, d, n, link, args.app, a, seed)])
    elif args.app == "sparse":
        d = int(cfg.get("d", args.d_dim or 64))
        n = int(cfg.get("n", args.n or 100_000))
        rng = task_rng(seed, 4, 1)
        spec = make_spec(family, d, **dict(cfg.get("family_params", {})))
        a = rng.standard_normal((d, d)) / math.sqrt(d)
        m_root = np.eye(d) + 0.5 * (a + a.T) / 2.0
        m_root = m_root @ m_root.T  # symmetric PD
        w, v = np.linalg.eigh(m_root)
        m_root = (v * np.sqrt(w)) @ v.T
        theta = rng.standard_normal(d)
        case = SparseModelCase(theta=theta, m_root=m_root)
        res = sparse_submodel_check(case, spec, n, rng)
        print(format_float(res.c_hat), format_float(res.c_se))
        path = run.emit("sparse.csv")
        write_csv(
            path,
            SPARSE_COLUMNS,
            [(family, d, n, res.c_hat, res.c_theory,
              float(np.max(np.abs(res.residual_mean))),
              float(np.max(np.abs(res.residual_var - np.median(res.residual_var)))),
              "", seed)],
        )
    else:
        raise ConfigError(f"unknown app: {args.app}")
    run.finish()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("theorem", help="deviation exceedance sweep over dimensions")
    _common_flags(pt)
    pt.add_argument("--family", default=None)
    pt.add_argument("--d", default=None, help="comma-separated dimensions")
    pt.add_argument("--n-betas", type=int, default=None)
    pt.add_argument("--eps", default=None, help="comma-separated thresholds")
    pt.add_argument("--n-samples", type=int, default=None)
    pt.add_argument("--n-slices", type=int, default=None)
    pt.set_defaults(func=cmd_theorem)

    pp = sub.add_parser("proof", help="proof-functional sweep over (d, x)")
    _common_flags(pp)
    pp.add_argument("--family", default=None)
    pp.add_argument("--d", default=None)
    pp.add_argument("--x", default=None)
    pp.add_argument("--reps", type=int, default=None)
    pp.add_argument("--functional", default=None)
    pp.add_argument("--k", type=int, default=None)
    pp.set_defaults(func=cmd_proof)

    pm = sub.add_parser("moments", help="Gram-moment condition diagnostics")
    _common_flags(pm)
    pm.add_argument("--family", default=None)
    pm.add_argument("--d", default=None)
    pm.add_argument("--reps", type=int, default=None)
    pm.add_argument("--k", type=int, default=None)
    pm.add_argument("--condition", default=None)
    pm.add_argument("--monomial", default=None)
    pm.add_argument("--cycle-len", type=int, default=None)
    pm.set_defaults(func=cmd_moments)

    pr = sub.add_parser("ratio", help="evaluate the density ratio at one point")
    pr.add_argument("--k", type=int, required=True)
    pr.add_argument("--d", dest="d_dim", type=int, required=True)
    pr.add_argument("--x", type=float, required=True)
    pr.add_argument("--gram", default="identity", help="'identity' or a k x k CSV file")
    pr.set_defaults(func=cmd_ratio)

    ps = sub.add_parser("psi", help="polynomial coefficients of the ratio")
    ps.add_argument("--k", type=int, required=True)
    ps.add_argument("--d", dest="d_dim", type=int, required=True)
    ps.add_argument("--x", type=float, required=True)
    ps.add_argument("--out", default=None, help="coefficient CSV path")
    ps.set_defaults(func=cmd_psi)

    pa = sub.add_parser("apps", help="SIR/SAVE and sparse-submodel demos")
    pa.add_argument("app", choices=["sir", "save", "sparse"])
    _common_flags(pa)
    pa.add_argument("--family", default=None)
    pa.add_argument("--d", dest="d_dim", type=int, default=None)
    pa.add_argument("--n", type=int, default=None)
    pa.add_argument("--link", default=None, choices=["linear", "cubic", "square"])
    pa.set_defaults(func=cmd_apps)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
