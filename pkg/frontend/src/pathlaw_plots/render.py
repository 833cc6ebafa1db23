"""Render experiment result directories into a figure report.

Input: a directory tree of experiment outputs, each experiment a
subdirectory with ``manifest.json`` and one or more CSV files. Output:
one SVG + PNG figure per experiment family plus an ``index.html``.
Rendering is deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# family -> (csv file, required columns)
FAMILY_SCHEMAS = {
    "simulate": ("snapshots.csv", ["t", "particle", "t_offset", "x_0"]),
    "picard": ("picard.csv", ["window", "n", "gap", "ratio"]),
    "contract": ("contract.csv", ["t", "w2_sq", "paired_cost_sq", "bound"]),
    "exo": ("exo.csv", ["t", "w2_sq", "bound"]),
    "harnack": ("harnack.csv", ["T", "p", "lhs", "rhs", "entropy_term", "margin", "stderr"]),
    "power-harnack": ("harnack.csv", ["T", "p", "lhs", "rhs", "margin", "stderr"]),
    "ibp": ("ibp.csv", ["T", "eta_id", "lhs", "rhs", "margin", "stderr"]),
    "shift-harnack": ("shift_harnack.csv", ["T", "p", "eta_id", "lhs", "rhs", "margin", "stderr"]),
    "fpke-check": ("fpke.csv", ["t", "h", "residual", "stderr"]),
}

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "svg.hashsalt": "pathlaw-plots",
    "axes.grid": True,
    "grid.alpha": 0.3,
}
_META_SVG = {"Date": None}
_META_PNG = {"Software": None}


class RenderError(RuntimeError):
    """Unusable input layout (no experiments, unreadable files)."""


class SchemaError(RenderError):
    """A result CSV does not match the expected column schema."""


def _read_csv(path: Path, required: list[str]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out: dict[str, np.ndarray] = {}
    for col in header:
        raw = [r[col] for r in rows]
        try:
            out[col] = np.array([float(v) for v in raw])
        except ValueError:
            out[col] = np.array(raw)
    return out


def discover(input_dir: Path) -> list[tuple[str, Path, dict]]:
    """(kind, directory, manifest) for every experiment under input_dir."""
    found = []
    for manifest_path in sorted(input_dir.rglob("manifest.json")):
        try:
            manifest = json.loads(manifest_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise RenderError(f"unreadable manifest {manifest_path}: {exc}") from exc
        kind = manifest.get("config", {}).get("kind")
        if kind not in FAMILY_SCHEMAS:
            raise SchemaError(f"{manifest_path}: unknown experiment kind {kind!r}")
        found.append((kind, manifest_path.parent, manifest))
    if not found:
        raise RenderError(f"no experiment manifests found under {input_dir}")
    return found


def _save(fig, out_dir: Path, name: str) -> list[str]:
    files = []
    for ext, meta in (("svg", _META_SVG), ("png", _META_PNG)):
        target = out_dir / f"{name}.{ext}"
        fig.savefig(target, metadata=meta)
        files.append(target.name)
    plt.close(fig)
    return files


def _label(run_dir: Path, manifest: dict) -> str:
    return f"{run_dir.name} (seed {manifest.get('seed')})"


def _fig_simulate(runs, out_dir):
    fig, ax = plt.subplots()
    for run_dir, manifest in runs:
        data = _read_csv(run_dir / "snapshots.csv", FAMILY_SCHEMAS["simulate"][1])
        t_last = data["t"].max()
        mask = (data["t"] == t_last) & (data["t_offset"] == data["t_offset"].max())
        ax.hist(data["x_0"][mask], bins=30, alpha=0.6, label=_label(run_dir, manifest))
    ax.set_xlabel("terminal state, coordinate 0")
    ax.set_ylabel("particles")
    ax.set_title("Terminal empirical distribution")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, "simulate")


def _fig_picard(runs, out_dir):
    fig, ax = plt.subplots()
    for run_dir, manifest in runs:
        data = _read_csv(run_dir / "picard.csv", FAMILY_SCHEMAS["picard"][1])
        for w in np.unique(data["window"]):
            mask = data["window"] == w
            gaps = np.maximum(data["gap"][mask], 1e-300)
            ax.semilogy(data["n"][mask], gaps, "o-",
                        label=f"{_label(run_dir, manifest)} w{int(w)}")
    ax.set_xlabel("iteration n")
    ax.set_ylabel("gap $g_n$")
    ax.set_title("Picard iteration gaps")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, "picard")


def _fig_contract(runs, out_dir, family="contract"):
    fname, cols = FAMILY_SCHEMAS[family]
    fig, ax = plt.subplots()
    for run_dir, manifest in runs:
        data = _read_csv(run_dir / fname, cols)
        order = np.argsort(data["t"])
        ax.semilogy(data["t"][order], data["w2_sq"][order], "o-",
                    label=f"measured {_label(run_dir, manifest)}")
        ax.semilogy(data["t"][order], data["bound"][order], "s--",
                    label=f"bound {_label(run_dir, manifest)}")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$W_2^2$")
    ax.set_title("Wasserstein contraction vs closed-form bound")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, family)


def _fig_margin_bars(runs, out_dir, family, fname, title):
    fig, ax = plt.subplots()
    labels, margins, errs = [], [], []
    for run_dir, manifest in runs:
        data = _read_csv(run_dir / fname, FAMILY_SCHEMAS[family][1])
        for i in range(len(data["margin"])):
            labels.append(run_dir.name if i == 0 else f"{run_dir.name}#{i}")
            margins.append(data["margin"][i])
            errs.append(3.0 * data["stderr"][i])
    x = np.arange(len(labels))
    ax.bar(x, margins, yerr=errs, capsize=4)
    ax.axhline(0.0, color="k", lw=1)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("margin (rhs - lhs)")
    ax.set_title(f"{title} (error bars: 3 stderr)")
    return _save(fig, out_dir, family)


def _fig_ibp(runs, out_dir):
    fig, ax = plt.subplots()
    labels, lhs, rhs, errs = [], [], [], []
    for run_dir, manifest in runs:
        data = _read_csv(run_dir / "ibp.csv", FAMILY_SCHEMAS["ibp"][1])
        for i in range(len(data["lhs"])):
            labels.append(f"{run_dir.name}/{data['eta_id'][i]}")
            lhs.append(data["lhs"][i])
            rhs.append(data["rhs"][i])
            errs.append(3.0 * data["stderr"][i])
    x = np.arange(len(labels))
    ax.errorbar(x - 0.08, lhs, fmt="o", label="direct derivative")
    ax.errorbar(x + 0.08, rhs, yerr=errs, fmt="s", capsize=4, label="weighted value")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_title("Integration by parts: both sides (3 stderr)")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, "ibp")


def _fig_fpke(runs, out_dir):
    fig, ax = plt.subplots()
    labels, residuals, allowance = [], [], []
    for run_dir, manifest in runs:
        data = _read_csv(run_dir / "fpke.csv", FAMILY_SCHEMAS["fpke-check"][1])
        for i in range(len(data["residual"])):
            labels.append(f"{run_dir.name} h={data['h'][i]:.3g}")
            residuals.append(data["residual"][i])
            allowance.append(3.0 * data["stderr"][i])
    x = np.arange(len(labels))
    ax.bar(x - 0.15, residuals, width=0.3, label="residual")
    ax.bar(x + 0.15, allowance, width=0.3, label="3 stderr")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_title("Weak-form residual of the nonlinear dynamics")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, "fpke-check")


_RENDERERS = {
    "simulate": _fig_simulate,
    "picard": _fig_picard,
    "contract": lambda runs, out: _fig_contract(runs, out, "contract"),
    "exo": lambda runs, out: _fig_contract(runs, out, "exo"),
    "harnack": lambda runs, out: _fig_margin_bars(
        runs, out, "harnack", "harnack.csv", "Log-Harnack margins"
    ),
    "power-harnack": lambda runs, out: _fig_margin_bars(
        runs, out, "power-harnack", "harnack.csv", "Power-Harnack margins"
    ),
    "ibp": _fig_ibp,
    "shift-harnack": lambda runs, out: _fig_margin_bars(
        runs, out, "shift-harnack", "shift_harnack.csv", "Shift-Harnack margins"
    ),
    "fpke-check": _fig_fpke,
}


def render_report(input_dir: Path, output_dir: Path) -> dict[str, list[str]]:
    """Render one figure per experiment family; returns {family: files}."""
    experiments = discover(input_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    by_family: dict[str, list] = {}
    for kind, run_dir, manifest in experiments:
        by_family.setdefault(kind, []).append((run_dir, manifest))
    produced: dict[str, list[str]] = {}
    with plt.rc_context(_RC):
        for family in sorted(by_family):
            produced[family] = _RENDERERS[family](by_family[family], output_dir)
    _write_index(output_dir, produced)
    return produced


def _write_index(output_dir: Path, produced: dict[str, list[str]]) -> None:
    lines = ["<!DOCTYPE html>", "<html><head><title>pathlaw report</title></head><body>",
             "<h1>Experiment report</h1>"]
    for family in sorted(produced):
        svg = next(f for f in produced[family] if f.endswith(".svg"))
        lines.append(f"<h2>{family}</h2>")
        lines.append(f'<img src="{svg}" alt="{family}" width="640">')
    lines.append("</body></html>")
    (output_dir / "index.html").write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pathlaw-render",
        description="Render pathlaw experiment outputs into figures",
    )
    parser.add_argument("--in", dest="input_dir", required=True, help="experiment output tree")
    parser.add_argument("--out", dest="output_dir", required=True, help="report directory")
    args = parser.parse_args(argv)
    try:
        produced = render_report(Path(args.input_dir), Path(args.output_dir))
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    for family in sorted(produced):
        print(f"{family}: {', '.join(produced[family])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
