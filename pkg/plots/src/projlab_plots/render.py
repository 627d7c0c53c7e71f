"""Figure rendering from projlab CSVs.

Each kind declares the columns it needs; a missing column aborts with its
name.  Rendering is read-only and deterministic: the Agg backend, fixed
figure geometry, and no timestamps embedded in the output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("sweep-lines", "exceedance", "heatmap", "bars")

REQUIRED_COLUMNS = {
    "exceedance": ["d", "eps", "frac_exceed_d1", "frac_exceed_d2", "se_frac_d1", "se_frac_d2"],
    "sweep-lines": ["functional", "d", "x", "estimate", "se"],
    "heatmap": ["functional", "d", "x", "estimate"],
    "bars": ["link", "method", "alignment"],
}


class SchemaError(Exception):
    """Input CSV does not match the declared schema."""


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str
    kind: str
    output: str
    filters: dict = field(default_factory=dict)
    logy: bool = False
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")


def _load(path: str, required: list[str], filters: dict) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"missing columns in {path}: {', '.join(missing)}")
        bad = [c for c in filters if c not in header]
        if bad:
            raise SchemaError(f"filter columns not in {path}: {', '.join(bad)}")
        rows = [r for r in reader if all(r[c] == v for c, v in filters.items())]
    if not rows:
        raise SchemaError(f"no rows left in {path} after filters {filters}")
    return rows


def _new_axes(title: str | None):
    fig, ax = plt.subplots(figsize=(7.0, 4.5), dpi=120)
    if title:
        ax.set_title(title)
    return fig, ax


def _save(fig, path: str) -> None:
    fig.savefig(path, format="png", metadata={"Software": "projlab-plots"})
    plt.close(fig)


def _render_exceedance(spec: FigureSpec):
    rows = _load(spec.input_csv, REQUIRED_COLUMNS["exceedance"], spec.filters)
    fig, ax = _new_axes(spec.title or "exceedance fractions vs dimension")
    eps_values = sorted({r["eps"] for r in rows}, key=float)
    for eps in eps_values:
        sub = sorted((r for r in rows if r["eps"] == eps), key=lambda r: int(r["d"]))
        d = [int(r["d"]) for r in sub]
        for col, se_col, style, label in (
            ("frac_exceed_d1", "se_frac_d1", "-o", "mean"),
            ("frac_exceed_d2", "se_frac_d2", "--s", "variance"),
        ):
            ax.errorbar(
                d,
                [float(r[col]) for r in sub],
                yerr=[float(r[se_col]) for r in sub],
                fmt=style,
                capsize=3,
                label=f"{label}, eps={eps}",
            )
    ax.set_xscale("log", base=2)
    ax.set_xlabel("dimension d")
    ax.set_ylabel("fraction of directions exceeding")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    _save(fig, spec.output)


def _render_sweep_lines(spec: FigureSpec):
    rows = _load(spec.input_csv, REQUIRED_COLUMNS["sweep-lines"], spec.filters)
    fig, ax = _new_axes(spec.title or "functional estimates vs dimension")
    keys = sorted({(r["functional"], r["x"]) for r in rows})
    for fn, x in keys:
        sub = sorted(
            (r for r in rows if r["functional"] == fn and r["x"] == x),
            key=lambda r: int(r["d"]),
        )
        d = [int(r["d"]) for r in sub]
        est = [float(r["estimate"]) for r in sub]
        se = [float(r["se"]) for r in sub]
        if spec.logy:
            est = [abs(v) for v in est]
        ax.errorbar(d, est, yerr=se, fmt="-o", capsize=3, label=f"{fn}, x={x}")
    ax.set_xscale("log", base=2)
    if spec.logy:
        ax.set_yscale("log")
        ax.set_ylabel("|estimate|")
    else:
        ax.axhline(0.0, color="gray", lw=0.8)
        ax.set_ylabel("estimate")
    ax.set_xlabel("dimension d")
    ax.legend(fontsize=8)
    _save(fig, spec.output)


def _render_heatmap(spec: FigureSpec):
    rows = _load(spec.input_csv, REQUIRED_COLUMNS["heatmap"], spec.filters)
    functionals = {r["functional"] for r in rows}
    if len(functionals) != 1:
        raise SchemaError(
            "heatmap needs rows for exactly one functional; "
            f"got {sorted(functionals)} (use --filter functional=NAME)"
        )
    ds = sorted({int(r["d"]) for r in rows})
    xs = sorted({float(r["x"]) for r in rows})
    grid = np.full((len(xs), len(ds)), np.nan)
    for r in rows:
        grid[xs.index(float(r["x"])), ds.index(int(r["d"]))] = abs(float(r["estimate"]))
    fig, ax = _new_axes(spec.title or f"|{functionals.pop()}| over (d, x)")
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xticks(range(len(ds)), [str(v) for v in ds])
    ax.set_yticks(range(len(xs)), [f"{v:g}" for v in xs])
    ax.set_xlabel("dimension d")
    ax.set_ylabel("conditioning value x")
    fig.colorbar(im, ax=ax, label="|estimate|")
    _save(fig, spec.output)


def _render_bars(spec: FigureSpec):
    rows = _load(spec.input_csv, REQUIRED_COLUMNS["bars"], spec.filters)
    fig, ax = _new_axes(spec.title or "direction recovery alignment")
    labels = [f"{r['method']}/{r['link']}" for r in rows]
    values = [float(r["alignment"]) for r in rows]
    ax.bar(range(len(rows)), values, color="steelblue")
    ax.set_xticks(range(len(rows)), labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("|alignment|")
    ax.set_ylim(0, 1.05)
    ax.axhline(0.9, color="gray", lw=0.8, ls="--")
    _save(fig, spec.output)


_RENDERERS = {
    "exceedance": _render_exceedance,
    "sweep-lines": _render_sweep_lines,
    "heatmap": _render_heatmap,
    "bars": _render_bars,
}


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path."""
    _RENDERERS[spec.kind](spec)
    return spec.output
