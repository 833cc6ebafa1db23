"""Experiment runner: config parsing, deterministic orchestration, CSV
and JSON emission.

One experiment per process invocation. All randomness flows from the
single seed in the config; sub-seeds are derived by hashing
(seed, role-label). A manifest is written before any result file, and
identical config + seed produce byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import ContractionParams, contraction_bound_detail, exo_criterion
from .coupling import log_harnack_check, power_harnack_check
from .functionals import make_differentiable_functional, make_eta, make_positive_functional
from .ibp import ibp_check, shift_harnack_check, shift_harnack_factor
from .models import make_linear_meanfield_delay, quadratic_test_function
from .pathspace import PathGrid
from .simulate import (
    SimConfig,
    SimulationError,
    picard_solve,
    sample_brownian_segments,
    sample_constant_segments,
    simulate_mckean,
    suggest_picard_window,
    verify_fpke_weak_form,
)
from .transport import EXACT_SOLVER_CAP, w2_exact, w2_sinkhorn, paired_cost

EXPERIMENT_KINDS = (
    "simulate",
    "picard",
    "contract",
    "exo",
    "harnack",
    "power-harnack",
    "ibp",
    "shift-harnack",
    "fpke-check",
)


class ConfigError(ValueError):
    """Invalid experiment configuration; exits with status 2."""


# allowed keys per nested config section
_COMMON_KEYS = {"kind", "seed", "grid", "model", "n_particles", "horizon"}
_SECTION_KEYS = {
    "grid": {"r0", "m"},
    "model": {"name", "d", "A0", "A1", "B", "sigma0"},
    "init": {"kind", "mean", "scale", "vol"},
    "f": {"name", "a", "cap", "center", "cycles"},
    "eta": {"name", "end", "start", "amp", "cycles"},
}
_KIND_KEYS = {
    "simulate": {"init", "snapshot_times"},
    "picard": {"init", "picard_iters", "picard_window"},
    "contract": {"init_mu", "init_nu", "checkpoints", "n_eps"},
    "exo": {"init_mu", "init_nu", "checkpoints", "n_eps"},
    "harnack": {"init_mu", "init_nu", "f"},
    "power-harnack": {"init_mu", "init_nu", "f", "p"},
    "ibp": {"init", "f", "eta"},
    "shift-harnack": {"init", "f", "eta", "p"},
    "fpke-check": {"init", "t"},
}


def _check_section(obj: dict, allowed: set, path: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {path}")


def validate_config(config: dict) -> dict:
    """Schema check: unknown keys rejected by name, required keys enforced."""
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    kind = config.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    allowed = _COMMON_KEYS | _KIND_KEYS[kind]
    _check_section(config, allowed, "config")
    for req in ("seed", "grid", "model", "n_particles", "horizon"):
        if req not in config:
            raise ConfigError(f"missing required key {req!r}")
    _check_section(config["grid"], _SECTION_KEYS["grid"], "config.grid")
    _check_section(config["model"], _SECTION_KEYS["model"], "config.model")
    for init_key in ("init", "init_mu", "init_nu"):
        if init_key in config:
            _check_section(config[init_key], _SECTION_KEYS["init"], f"config.{init_key}")
    for sub in ("f", "eta"):
        if sub in config:
            _check_section(config[sub], _SECTION_KEYS[sub], f"config.{sub}")
    if not isinstance(config["seed"], int):
        raise ConfigError("seed must be an integer")
    return config


def _as_matrix(raw, d: int, name: str) -> np.ndarray:
    if raw is None:
        return np.zeros((d, d))
    if isinstance(raw, (int, float)):
        return float(raw) * np.eye(d)
    mat = np.asarray(raw, dtype=float)
    if mat.shape != (d, d):
        raise ConfigError(f"model.{name} must be a {d}x{d} matrix or a scalar")
    return mat


def build_model(spec: dict, r0: float):
    name = spec.get("name", "linear_meanfield_delay")
    if name != "linear_meanfield_delay":
        raise ConfigError(f"unknown model {name!r}")
    d = int(spec.get("d", 1))
    try:
        return make_linear_meanfield_delay(
            d,
            _as_matrix(spec.get("A0"), d, "A0"),
            _as_matrix(spec.get("A1"), d, "A1"),
            _as_matrix(spec.get("B"), d, "B"),
            _as_matrix(spec.get("sigma0", 1.0), d, "sigma0"),
            r0,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_init(spec: dict, grid: PathGrid, n: int, d: int, seed: int, label: str):
    kind = spec.get("kind", "constant")
    mean = np.asarray(spec.get("mean", [0.0] * d), dtype=float)
    scale = float(spec.get("scale", 1.0))
    if kind == "constant":
        return sample_constant_segments(grid, n, d, mean, scale, seed, label=label)
    if kind == "brownian":
        vol = float(spec.get("vol", 1.0))
        return sample_brownian_segments(grid, n, d, mean, scale, vol, seed, label=label)
    raise ConfigError(f"unknown init kind {kind!r}")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(out_dir: Path, config: dict) -> None:
    manifest = {
        "config": config,
        "seed": config["seed"],
        "versions": {
            "pathlaw": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(config: dict, out_dir: Path) -> str:
    """Dispatch one experiment; returns a one-line summary."""
    config = validate_config(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(out_dir, config)

    grid = PathGrid(float(config["grid"]["r0"]), int(config["grid"]["m"]))
    model = build_model(config["model"], grid.r0)
    n = int(config["n_particles"])
    horizon = float(config["horizon"])
    seed = config["seed"]
    kind = config["kind"]
    sim_cfg = SimConfig(
        n_particles=n,
        horizon=horizon,
        grid=grid,
        seed=seed,
        picard_iters=int(config.get("picard_iters", 4)),
        picard_window=config.get("picard_window"),
    )

    if kind == "simulate":
        init = build_init(config.get("init", {}), grid, n, model.d, seed, "init")
        times = config.get("snapshot_times") or [0.0, horizon]
        res = simulate_mckean(model, init, sim_cfg, snapshot_times=[float(t) for t in times])
        rows = []
        for t, mu in res.snapshots:
            for i in range(mu.n):
                for k, theta in enumerate(grid.thetas):
                    rows.append([t, i, theta] + list(mu.segments[i, k]))
        header = ["t", "particle", "t_offset"] + [f"x_{j}" for j in range(model.d)]
        write_csv(out_dir / "snapshots.csv", header, rows)
        return f"simulate: {len(res.snapshots)} snapshots, N={n}, T={horizon}"

    if kind == "picard":
        init = build_init(config.get("init", {}), grid, n, model.d, seed, "init")
        t0 = sim_cfg.picard_window or suggest_picard_window(model, sim_cfg)
        report, _ = picard_solve(model, init, sim_cfg)
        rows = []
        for w, gaps in enumerate(report.gaps):
            ratios = report.ratios[w]
            for j, gap in enumerate(gaps):
                ratio = ratios[j - 1] if j >= 1 else math.nan
                rows.append([w, j + 1, float(gap), float(ratio)])
        write_csv(out_dir / "picard.csv", ["window", "n", "gap", "ratio"], rows)
        return f"picard: window t0={t0}, {len(report.gaps)} windows"

    if kind in ("contract", "exo"):
        init_mu = build_init(config.get("init_mu", {}), grid, n, model.d, seed, "init-mu")
        init_nu = build_init(config.get("init_nu", {}), grid, n, model.d, seed, "init-nu")
        checkpoints = [float(t) for t in config.get("checkpoints") or [horizon]]
        # shared Brownian increments: same noise label and particle ids
        res_mu = simulate_mckean(model, init_mu, sim_cfg, noise_label="pair-W")
        res_nu = simulate_mckean(model, init_nu, sim_cfg, noise_label="pair-W")
        params = ContractionParams.from_model(model)
        n_eps = int(config.get("n_eps", 129))
        w0_sq = paired_cost(init_mu, init_nu)
        method = "exact" if n <= EXACT_SOLVER_CAP else "sinkhorn"
        rows = []
        for t in checkpoints:
            mu_t = res_mu.ensemble.measure_at(t)
            nu_t = res_nu.ensemble.measure_at(t)
            if method == "exact":
                w2, converged = w2_exact(mu_t, nu_t), True
            else:
                sk = w2_sinkhorn(mu_t, nu_t, reg=1e-3)
                w2, converged = sk.value, sk.converged
            pc = paired_cost(mu_t, nu_t)
            bound, eps_star, delta_star = contraction_bound_detail(params, w0_sq, t, n_eps)
            rows.append(
                [t, n, method, w2, w2**2, pc, bound, eps_star, delta_star, int(converged)]
            )
        write_csv(
            out_dir / ("contract.csv" if kind == "contract" else "exo.csv"),
            ["t", "n_particles", "method", "w2", "w2_sq", "paired_cost_sq",
             "bound", "eps_star", "delta_star", "converged"],
            rows,
        )
        if kind == "exo":
            exo = exo_criterion(params, n_eps)
            ts = np.array(checkpoints)
            w2_sqs = np.array([row[4] for row in rows])
            mask = w2_sqs > 0
            slope = float(np.polyfit(ts[mask], np.log(w2_sqs[mask]), 1)[0])
            with open(out_dir / "exo_summary.json", "w") as fh:
                json.dump(
                    {
                        "holds": exo.holds,
                        "best_rate": exo.best_rate,
                        "best_eps": exo.best_eps,
                        "best_delta": exo.best_delta,
                        "fitted_slope": slope,
                    },
                    fh,
                    indent=2,
                    sort_keys=True,
                )
                fh.write("\n")
            return f"exo: holds={exo.holds}, best_rate={exo.best_rate:.4g}, slope={slope:.4g}"
        return f"contract: {len(checkpoints)} checkpoints, N={n}"

    if kind in ("harnack", "power-harnack"):
        init_mu = build_init(config.get("init_mu", {}), grid, n, model.d, seed, "init-mu")
        init_nu = build_init(config.get("init_nu", {}), grid, n, model.d, seed, "init-nu")
        f_spec = config.get("f", {"name": "one"})
        f = make_positive_functional(f_spec.get("name", "one"), f_spec, model.d)
        header = ["T", "p", "lhs", "rhs", "entropy_term", "margin", "stderr", "n_samples"]
        if kind == "harnack":
            rep = log_harnack_check(model, init_mu, init_nu, f, horizon, sim_cfg)
            write_csv(
                out_dir / "harnack.csv",
                header,
                [[horizon, 0.0, rep.lhs, rep.rhs_base, rep.entropy_term,
                  rep.margin, rep.margin_stderr, rep.n_samples]],
            )
            return f"harnack: margin={rep.margin:.4g} (stderr {rep.margin_stderr:.2g})"
        p = float(config.get("p", 2.0))
        rep = power_harnack_check(model, init_mu, init_nu, f, p, horizon, sim_cfg)
        write_csv(
            out_dir / "harnack.csv",
            header,
            [[horizon, p, rep.lhs, rep.rhs, math.nan, rep.margin,
              rep.margin_stderr, rep.n_samples]],
        )
        return f"power-harnack: p={p}, margin={rep.margin:.4g}"

    if kind in ("ibp", "shift-harnack"):
        init = build_init(config.get("init", {}), grid, n, model.d, seed, "init")
        eta_spec = config.get("eta", {"name": "ramp"})
        eta = make_eta(eta_spec.get("name", "ramp"), eta_spec, grid, model.d)
        eta_id = eta_spec.get("name", "ramp")
        header = ["T", "p", "eta_id", "lhs", "rhs", "factor", "margin", "stderr"]
        if kind == "ibp":
            f_spec = config.get("f", {"name": "linear"})
            f_value, f_dir = make_differentiable_functional(
                f_spec.get("name", "linear"), f_spec, model.d
            )
            rep = ibp_check(model, init, eta, f_value, f_dir, horizon, sim_cfg)
            write_csv(
                out_dir / "ibp.csv",
                header,
                [[horizon, math.nan, eta_id, rep.lhs, rep.rhs, math.nan,
                  rep.lhs - rep.rhs, rep.stderr]],
            )
            return f"ibp: lhs={rep.lhs:.5g}, rhs={rep.rhs:.5g}, stderr={rep.stderr:.2g}"
        f_spec = config.get("f", {"name": "gaussian"})
        f = make_positive_functional(f_spec.get("name", "gaussian"), f_spec, model.d)
        p = float(config.get("p", 2.0))
        rep = shift_harnack_check(model, init, eta, f, p, horizon, sim_cfg)
        write_csv(
            out_dir / "shift_harnack.csv",
            header,
            [[horizon, p, eta_id, rep.lhs, rep.rhs, rep.factor,
              rep.margin, rep.margin_stderr]],
        )
        return f"shift-harnack: p={p}, margin={rep.margin:.4g}"

    if kind == "fpke-check":
        init = build_init(config.get("init", {}), grid, n, model.d, seed, "init")
        t = float(config.get("t", horizon))
        res = simulate_mckean(model, init, sim_cfg)
        h = sim_cfg.step
        k_end = res.ensemble.index_of(t)
        snapshots = [(k * h, res.ensemble.measure_at_index(k)) for k in range(k_end + 1)]
        rep = verify_fpke_weak_form(snapshots, model, quadratic_test_function(), t)
        write_csv(
            out_dir / "fpke.csv",
            ["t", "h", "residual", "stderr"],
            [[t, h, rep.residual, rep.stderr]],
        )
        return f"fpke-check: residual={rep.residual:.4g} (stderr {rep.stderr:.2g}, h={h})"

    raise ConfigError(f"unhandled kind {kind!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pathlaw",
        description="Particle experiments for path-distribution dependent SDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker-thread cap (speed only, never affects results)",
        )
    args = parser.parse_args(argv)

    if args.threads is not None:
        os.environ["PATHLAW_THREADS"] = str(args.threads)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if not isinstance(config, dict):
        print("config error: root must be a JSON object", file=sys.stderr)
        return 2
    config.setdefault("kind", args.command)
    if config["kind"] != args.command:
        print(
            f"config error: config kind {config['kind']!r} does not match "
            f"subcommand {args.command!r}",
            file=sys.stderr,
        )
        return 2
    if args.seed is not None:
        config["seed"] = args.seed

    try:
        summary = run_experiment(config, Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 3
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
