"""Rendering package: discovery, schema checks, figure emission."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from pathlaw_plots.render import RenderError, SchemaError, discover, main, render_report


def _write_experiment(root: Path, name: str, kind: str, csv_name: str, csv_text: str):
    d = root / name
    d.mkdir(parents=True)
    (d / "manifest.json").write_text(json.dumps({"seed": 1, "config": {"kind": kind}}))
    (d / csv_name).write_text(csv_text)
    return d


PICARD_CSV = "window,n,gap,ratio\n0,1,1e-3,nan\n0,2,1e-5,1e-2\n0,3,1e-7,1e-2\n"
CONTRACT_CSV = (
    "t,n_particles,method,w2,w2_sq,paired_cost_sq,bound,eps_star,delta_star,converged\n"
    "1,64,exact,0.5,0.25,0.26,0.4,1e-6,1.0,1\n"
    "2,64,exact,0.3,0.09,0.10,0.2,1e-6,1.0,1\n"
)
HARNACK_CSV = (
    "T,p,lhs,rhs,entropy_term,margin,stderr,n_samples\n"
    "0.75,0,-0.3,-0.2,0.4,0.5,0.07,256\n"
)
IBP_CSV = "T,p,eta_id,lhs,rhs,factor,margin,stderr\n0.75,nan,ramp,0.4,0.39,nan,0.01,0.02\n"
FPKE_CSV = "t,h,residual,stderr\n0.5,0.03125,0.006,0.004\n"


def test_discover_and_render(tmp_path):
    results = tmp_path / "results"
    _write_experiment(results, "pic", "picard", "picard.csv", PICARD_CSV)
    _write_experiment(results, "con", "contract", "contract.csv", CONTRACT_CSV)
    _write_experiment(results, "har", "harnack", "harnack.csv", HARNACK_CSV)
    _write_experiment(results, "ibp", "ibp", "ibp.csv", IBP_CSV)
    _write_experiment(results, "fp", "fpke-check", "fpke.csv", FPKE_CSV)
    assert len(discover(results)) == 5
    out = tmp_path / "report"
    produced = render_report(results, out)
    assert set(produced) == {"picard", "contract", "harnack", "ibp", "fpke-check"}
    for family, files in produced.items():
        assert len(files) == 2  # SVG + PNG
        for f in files:
            assert (out / f).stat().st_size > 0
    index = (out / "index.html").read_text()
    for family in produced:
        assert family in index


def test_empty_input_rejected(tmp_path):
    with pytest.raises(RenderError):
        render_report(tmp_path, tmp_path / "out")


def test_schema_mismatch_names_column(tmp_path):
    results = tmp_path / "results"
    _write_experiment(results, "pic", "picard", "picard.csv", "window,n\n0,1\n")
    with pytest.raises(SchemaError, match="gap"):
        render_report(results, tmp_path / "out")


def test_unknown_kind_rejected(tmp_path):
    results = tmp_path / "results"
    _write_experiment(results, "x", "teleport", "x.csv", "a\n1\n")
    with pytest.raises(SchemaError, match="teleport"):
        discover(results)


def test_empty_csv_rejected(tmp_path):
    results = tmp_path / "results"
    _write_experiment(results, "pic", "picard", "picard.csv", "window,n,gap,ratio\n")
    with pytest.raises(SchemaError, match="no data rows"):
        render_report(results, tmp_path / "out")


def test_cli_exit_codes(tmp_path):
    results = tmp_path / "results"
    _write_experiment(results, "pic", "picard", "picard.csv", PICARD_CSV)
    assert main(["--in", str(results), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "picard.svg").exists()
    assert main(["--in", str(tmp_path / "nowhere"), "--out", str(tmp_path / "rep2")]) == 2


def test_rendering_is_deterministic(tmp_path):
    results = tmp_path / "results"
    _write_experiment(results, "con", "contract", "contract.csv", CONTRACT_CSV)
    render_report(results, tmp_path / "a")
    render_report(results, tmp_path / "b")
    for name in ("contract.svg", "index.html"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_script_runs(tmp_path):
    results = tmp_path / "results"
    _write_experiment(results, "fp", "fpke-check", "fpke.csv", FPKE_CSV)
    proc = subprocess.run(
        [sys.executable, "-m", "pathlaw_plots.render", "--in", str(results),
         "--out", str(tmp_path / "rep")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "fpke-check" in proc.stdout
