"""Command-line experiment runner.

Every subcommand resolves its parameters (flags beat a --config JSON file,
which beats built-in defaults), re-validates the theorem hypotheses it
relies on, writes its tables and a manifest.json with the full resolved
configuration, and exits with a structured code:

    0  success
    2  usage error
    3  hypothesis violation
    4  I/O or file-format error
    5  numerical failure

All randomness flows from --seed; no wall-clock entropy is used anywhere,
so re-running a manifest reproduces every output byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import HypothesisError, NumericalError, __version__
from . import activations, cpanet, ensembles, perturb
from .linalg import read_matrix, svd, write_matrix
from .reportio import (
    freedman_diaconis_histogram,
    ks_two_sample,
    quantile_summary,
    write_csv,
    write_json,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_HYPOTHESIS = 3
EXIT_IO = 4
EXIT_NUMERICAL = 5


def parse_grid(spec: str) -> np.ndarray:
    """Inclusive grid "start:stop:count"."""
    try:
        start_s, stop_s, count_s = spec.split(":")
        start, stop, count = float(start_s), float(stop_s), int(count_s)
        if count < 1 or stop < start:
            raise ValueError
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid spec {spec!r}, want start:stop:count") from exc
    return np.linspace(start, stop, count)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _IoFailure(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _IoFailure(f"bad config JSON: {exc}") from exc
    if isinstance(payload, dict) and isinstance(payload.get("params"), dict):
        return payload["params"]
    if isinstance(payload, dict):
        return payload
    raise _IoFailure("config JSON must be an object")


class _IoFailure(Exception):
    pass


def resolve(args: argparse.Namespace, config: dict, defaults: dict, optional=()) -> dict:
    """flags > config file > defaults; flags left at None fall through."""
    params = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            params[key] = flag_val
        elif key in config:
            params[key] = config[key]
        else:
            params[key] = default
    missing = [k for k, v in params.items() if v is None and k not in optional]
    if missing:
        raise _UsageFailure(f"missing required parameter(s): {', '.join(missing)}")
    return params


class _UsageFailure(Exception):
    pass


def _out_dir(params: dict) -> Path:
    out = Path(params["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, subcommand: str, params: dict) -> None:
    grid_free = {
        k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in params.items()
    }
    write_json(out / "manifest.json", {
        "tool": "svperturb",
        "version": __version__,
        "subcommand": subcommand,
        "params": grid_free,
    })


# --- subcommands ------------------------------------------------------------------


def cmd_svd(args) -> int:
    defaults = {"input": None, "out_dir": "out"}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    a_mat = read_matrix(params["input"])
    res = svd(a_mat)
    write_matrix(out / "singular_values.txt", res.s.reshape(1, -1))
    write_matrix(out / "U.txt", res.U)
    write_matrix(out / "V.txt", res.V)
    _write_manifest(out, "svd", params)
    return EXIT_OK


def cmd_sweep_rho(args) -> int:
    defaults = {"input": None, "out_dir": "out", "rho_grid": "0:1:101", "gap_tol": 1e-8}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    grid = parse_grid(params["rho_grid"]) if isinstance(params["rho_grid"], str) else np.asarray(params["rho_grid"])
    fam = perturb.make_family(read_matrix(params["input"]))
    traj = perturb.sv_trajectory(fam, grid, with_derivatives=True)
    (out / "trajectory.csv").write_text(perturb.trajectory_to_csv(traj), encoding="utf-8", newline="\n")
    flagged = perturb.multiplicity_gaps(fam, grid, gap_tol=float(params["gap_tol"]))
    write_json(out / "summary.json", {
        "tau_under": fam.tau_under,
        "tau_over": fam.tau_over,
        "s1_0": fam.s1_0,
        "sn_0": fam.sn_0,
        "flagged_rhos": flagged.tolist(),
    })
    _write_manifest(out, "sweep-rho", {**params, "rho_grid": params["rho_grid"]})
    return EXIT_OK


def cmd_bounds_id(args) -> int:
    defaults = {"input": None, "out_dir": "out"}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    fam = perturb.make_family(read_matrix(params["input"]))
    bounds = perturb.kappa_bounds_id(fam)
    write_json(out / "bounds.json", {
        "via_opnorm_tight": bounds.via_opnorm_tight,
        "via_opnorm_simple": bounds.via_opnorm_simple,
        "via_tau_tight": bounds.via_tau_tight,
        "via_tau_simple": bounds.via_tau_simple,
        "applicable_opnorm": bounds.applicable_opnorm,
        "applicable_tau": bounds.applicable_tau,
        "kappa_measured": perturb.kappa_shifted(fam, 1.0),
        "tau_under": fam.tau_under,
        "tau_over": fam.tau_over,
        "s1_0": fam.s1_0,
        "sn_0": fam.sn_0,
    })
    _write_manifest(out, "bounds-id", params)
    return EXIT_OK


def cmd_hard_bounds(args) -> int:
    defaults = {
        "eta": None, "n": None, "m": 0, "c": None, "c_times_n": None,
        "verify_trials": 0, "depth": 1, "seed": 0, "out_dir": "out",
    }
    params = resolve(args, _load_config(args.config), defaults, optional=("c", "c_times_n"))
    if params["c"] is None and params["c_times_n"] is None:
        raise _UsageFailure("provide --c or --c-times-n")
    out = _out_dir(params)
    n = int(params["n"])
    c = float(params["c"]) if params["c"] is not None else float(params["c_times_n"]) / n
    reports = activations.hard_bounds(c, n, int(params["m"]), float(params["eta"]))
    trials = int(params["verify_trials"])
    measured = {}
    if trials > 0:
        for rep, max_kappa, violations in activations.hard_bound_trials(
            reports, n, c, float(params["eta"]), int(params["m"]), trials,
            int(params["seed"]), depth=int(params["depth"]),
        ):
            measured[rep.name] = (max_kappa, violations)
    rows = []
    for rep in reports:
        max_kappa, violations = measured.get(rep.name, (float("nan"), ""))
        rows.append([
            rep.name, rep.eta, rep.c, rep.n, rep.m,
            rep.applicable, rep.bound_value, max_kappa,
        ])
    write_csv(out / "hard_bounds.csv",
              ["theorem", "eta", "c", "n", "m", "hypothesis_ok", "bound", "measured_kappa_max"],
              rows)
    if trials > 0:
        write_json(out / "summary.json", {
            rep.name: {"max_kappa": measured[rep.name][0], "violations": measured[rep.name][1],
                       "bound": rep.bound_value, "applicable": rep.applicable}
            for rep in reports
        })
    _write_manifest(out, "hard-bounds", {**params, "c": c})
    return EXIT_OK


def cmd_tracy_widom(args) -> int:
    defaults = {"n": None, "dist": "gaussian", "trials": 10000, "seed": 0,
                "r": 2.0, "threads": 1, "out_dir": "out", "format": "csv"}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    spec = ensembles.EnsembleSpec(n=int(params["n"]), dist=params["dist"], r=float(params["r"]),
                                  trials=int(params["trials"]), master_seed=int(params["seed"]))
    stats = ensembles.edge_stats(spec, threads=int(params["threads"]))
    header = ["trial", "z", "z_tilde", "y", "tau_ratio"]
    y_col = stats.y_samples if stats.y_samples is not None else np.full(spec.trials, np.nan)
    rows = [
        [t, stats.z_samples[t], stats.z_tilde_samples[t], y_col[t], stats.tau_ratio_samples[t]]
        for t in range(spec.trials)
    ]
    _emit_table(out / "edge_samples", header, rows, params["format"])
    summary = {
        "z": quantile_summary(stats.z_samples),
        "z_tilde": quantile_summary(stats.z_tilde_samples),
        "tau_ratio": quantile_summary(stats.tau_ratio_samples),
        "z_exceed_8": int(np.sum(stats.z_samples >= 8.0)),
        "z_histogram": freedman_diaconis_histogram(stats.z_samples),
        "ks_z_vs_z_tilde": ks_two_sample(stats.z_samples, stats.z_tilde_samples),
        "tau_ratio_in_06_14": float(np.mean(
            (stats.tau_ratio_samples > 0.6) & (stats.tau_ratio_samples < 1.4))),
    }
    if stats.y_samples is not None:
        summary["y"] = quantile_summary(stats.y_samples)
    write_json(out / "summary.json", summary)
    _write_manifest(out, "tracy-widom", params)
    return EXIT_OK


def _emit_table(stem: Path, header, rows, fmt: str) -> None:
    if fmt == "json":
        write_json(stem.with_suffix(".json"),
                   {"rows": [dict(zip(header, row)) for row in rows]})
    else:
        write_csv(stem.with_suffix(".csv"), header, rows)


def cmd_ensemble_abs(args) -> int:
    defaults = {"n": None, "r": 2.0, "trials": 10000, "seed": 0, "m": None,
                "threads": 1, "out_dir": "out", "format": "csv", "improvement": False}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    n = int(params["n"])
    m = int(params["m"]) if params["m"] is not None else n // 2
    params["m"] = m
    spec = ensembles.EnsembleSpec(n=n, dist="gaussian", r=float(params["r"]),
                                  trials=int(params["trials"]), master_seed=int(params["seed"]))
    records = ensembles.abs_bound_experiment(spec, m, threads=int(params["threads"]))
    header = ensembles.TRIAL_COLUMNS.split(",")
    rows = []
    for t, rec in enumerate(records):
        rows.append([
            t, rec.kappa_measured, rec.bound_tight, rec.bound_simple,
            rec.bound_s1_tight, rec.bound_s1_simple, rec.s1_w, rec.sn_w,
            rec.tau_under, rec.tau_over, rec.ratio_smallest, rec.ratio_largest,
            rec.ratio_kappa, "+".join(sorted(rec.exception_flags)) or "none",
        ])
    _emit_table(out / "trials", header, rows, params["format"])
    clean = [rec for rec in records if not rec.exception_flags]
    kappa = np.array([rec.kappa_measured for rec in records])
    summary = {
        "trials": spec.trials,
        "exceptions": {
            "s1_ge_1": sum(1 for r_ in records if "s1_ge_1" in r_.exception_flags),
            "tau_le_neg1": sum(1 for r_ in records if "tau_le_neg1" in r_.exception_flags),
        },
        "tight_bound_violations_non_exceptional": sum(
            1 for rec in clean if rec.kappa_measured > rec.bound_tight + 1e-9),
        "kappa": quantile_summary(kappa),
        "kappa_histogram": freedman_diaconis_histogram(kappa),
        "min_efficiency_ratios": {
            "smallest": float(np.min([rec.ratio_smallest for rec in clean])) if clean else None,
            "largest": float(np.min([rec.ratio_largest for rec in clean])) if clean else None,
            "kappa": float(np.min([rec.ratio_kappa for rec in clean])) if clean else None,
        },
        "asymptotic_constants": dict(zip(("via_tau", "via_s1"),
                                         ensembles.asymptotic_constants(spec.r))),
    }
    if params["improvement"]:
        imp = ensembles.residual_improves(spec, m, threads=int(params["threads"]))
        summary["improvement"] = {
            "fraction_improved": imp.fraction_improved,
            "fraction_condition_holds": imp.fraction_condition_holds,
            "counterexamples_given_condition": imp.counterexamples_given_condition,
        }
    write_json(out / "summary.json", summary)
    _write_manifest(out, "ensemble-abs", params)
    return EXIT_OK


def cmd_ensemble_relu(args) -> int:
    defaults = {"n": None, "r": None, "trials": 2000, "seed": 0, "m": None,
                "m_tilde": None, "theta": 4.5, "r_prime": 2.0,
                "threads": 1, "out_dir": "out", "format": "csv"}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    spec = ensembles.EnsembleSpec(n=int(params["n"]), dist="gaussian", r=float(params["r"]),
                                  trials=int(params["trials"]), master_seed=int(params["seed"]))
    result = ensembles.relu_bound_experiment(
        spec, int(params["m"]), int(params["m_tilde"]),
        float(params["theta"]), float(params["r_prime"]), threads=int(params["threads"]),
    )
    header = ["trial", "kappa_measured", "s1_w", "bound_fixed", "bound_via_s1",
              "bound_region_uniform", "exception_flags"]
    rows = [
        [t, rec.kappa_measured, rec.s1_w, rec.bound_fixed, rec.bound_via_s1,
         rec.bound_region_uniform, "+".join(sorted(rec.exception_flags)) or "none"]
        for t, rec in enumerate(result.records)
    ]
    _emit_table(out / "trials", header, rows, params["format"])
    write_json(out / "summary.json", {
        "trials": spec.trials,
        "nu": result.nu,
        "violations_fixed": result.violations_fixed,
        "violations_via_s1": result.violations_via_s1,
        "violations_region_uniform": result.violations_region_uniform,
        "allowed_failure_probability": result.allowed_failure_probability,
        "exceptional_trials": sum(1 for rec in result.records if rec.exception_flags),
        "kappa": quantile_summary([rec.kappa_measured for rec in result.records]),
    })
    _write_manifest(out, "ensemble-relu", params)
    return EXIT_OK


def cmd_edelman(args) -> int:
    defaults = {"n": 200, "trials": 5000, "seed": 0, "threads": 1,
                "out_dir": "out", "format": "csv"}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    result = ensembles.edelman_check(int(params["n"]), int(params["trials"]),
                                     int(params["seed"]), threads=int(params["threads"]))
    rows = [[t, v] for t, v in enumerate(result.kappa_over_n_samples)]
    _emit_table(out / "samples", ["trial", "kappa_over_n"], rows, params["format"])
    write_json(out / "summary.json", {
        "ks_distance": result.ks_distance,
        "density_integral": result.density_integral,
        "kappa_over_n": quantile_summary(result.kappa_over_n_samples),
        "histogram": freedman_diaconis_histogram(result.kappa_over_n_samples),
    })
    _write_manifest(out, "edelman", params)
    return EXIT_OK


def cmd_fig9(args) -> int:
    defaults = {"seed": 0, "runs": 8, "rho_grid": "0:1:21", "out_dir": "out"}
    params = resolve(args, _load_config(args.config), defaults)
    out = _out_dir(params)
    grid = parse_grid(params["rho_grid"]) if isinstance(params["rho_grid"], str) else np.asarray(params["rho_grid"])
    result = cpanet.fig9_experiment(int(params["seed"]), grid, runs=int(params["runs"]))
    layer_entries = []
    for k, run in enumerate(result.runs):
        write_csv(out / f"run{k}.csv", ["rho", "s1_Q", "s_star_Q", "kappa_Q"],
                  [[run.rho_grid[i], run.s1_q[i], run.s_star_q[i], run.kappa_q[i]]
                   for i in range(run.rho_grid.size)])
        for j, layer in enumerate(run.network.layers):
            w_name = f"run{k}_layer{j}_W.txt"
            b_name = f"run{k}_layer{j}_b.txt"
            write_matrix(out / w_name, layer.W)
            write_matrix(out / b_name, layer.b.reshape(1, -1))
            layer_entries.append({
                "run": k, "layer": j, "weights": w_name, "bias": b_name,
                "shape": list(layer.W.shape), "eta": layer.eta, "rho": layer.rho,
            })
        write_matrix(out / f"run{k}_probe.txt", run.probe.reshape(1, -1))
        write_matrix(out / f"run{k}_target.txt", run.target.reshape(1, -1))
    profile_files = {}
    for idx, rho in enumerate(result.profile_rhos):
        profiles = np.stack([run.ratio_profiles[rho] for run in result.runs])
        name = f"profile_rho{idx}.csv"
        profile_files[name] = rho
        write_csv(out / name,
                  ["i", "ratio_mean", "ratio_std"],
                  [[i + 1, float(np.mean(profiles[:, i])), float(np.std(profiles[:, i]))]
                   for i in range(profiles.shape[1])])
    write_json(out / "network_manifest.json", {
        "layers": layer_entries,
        "trained_layer_index": cpanet.FIG9_TRAINED_INDEX,
        "trailing_skip": "swept analytically over rho_grid",
        "profile_files": profile_files,
        "region_signatures": [run.region_signature for run in result.runs],
    })
    _write_manifest(out, "fig9", params)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svperturb",
                                     description="singular-value perturbation experiments")
    parser.add_argument("--version", action="version", version=f"svperturb {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--config", help="JSON file with parameters (flags take precedence)")

    p = sub.add_parser("svd", help="decompose a matrix file")
    common(p)
    p.add_argument("--input")
    p.set_defaults(handler=cmd_svd)

    p = sub.add_parser("sweep-rho", help="singular-value trajectory of M0 + rho*Id")
    common(p)
    p.add_argument("--input")
    p.add_argument("--rho-grid", dest="rho_grid")
    p.add_argument("--gap-tol", dest="gap_tol", type=float)
    p.set_defaults(handler=cmd_sweep_rho)

    p = sub.add_parser("bounds-id", help="condition-number bounds for M0 + Id")
    common(p)
    p.add_argument("--input")
    p.set_defaults(handler=cmd_bounds_id)

    p = sub.add_parser("hard-bounds", help="deterministic hard bounds, optional Monte-Carlo verify")
    common(p)
    p.add_argument("--eta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--c-times-n", dest="c_times_n", type=float)
    p.add_argument("--verify-trials", dest="verify_trials", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_hard_bounds)

    p = sub.add_parser("tracy-widom", help="edge statistics of the unscaled ensemble")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--dist", choices=("gaussian", "uniform"))
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(handler=cmd_tracy_widom)

    p = sub.add_parser("ensemble-abs", help="sign-mask bound experiment")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--improvement", action="store_const", const=True)
    p.set_defaults(handler=cmd_ensemble_abs)

    p = sub.add_parser("ensemble-relu", help="ReLU-mask bound experiment")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--m-tilde", dest="m_tilde", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--r-prime", dest="r_prime", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(handler=cmd_ensemble_relu)

    p = sub.add_parser("edelman", help="kappa/n samples against the limit law")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(handler=cmd_edelman)

    p = sub.add_parser("fig9", help="toy-network rho sweep")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--rho-grid", dest="rho_grid")
    p.set_defaults(handler=cmd_fig9)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.handler(args)
    except _UsageFailure as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisError as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except _IoFailure as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, UnicodeDecodeError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # bad file contents / malformed parameters
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
