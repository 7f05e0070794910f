"""Command-line front end.

Commands
--------
validate      check a config: structure, matrix constraints, stability metrics
simulate      run the configured Monte-Carlo experiment, write curve CSVs
theory        evaluate the closed-form models only (linear configs)
localization  simulate the bundled multi-target localization experiment

Exit codes: 0 success, 1 usage or parse error, 2 validation failure,
3 stability warning, 4 runtime failure.  The default output directory can be
set with the MTDIFFUSION_OUT environment variable.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import theory
from .config import (Config, ConfigError, bundled_config_path, build_experiment,
                     build_model, build_network, explicit_matrices, load_config,
                     save_config)
from .curves import write_gnuplot_script, write_manifest, write_steady_state_csv
from .datagen import LinearModelSpec
from .harness import materialize_variant, monte_carlo
from .network import validate as validate_network

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_STABILITY = 3
EXIT_RUNTIME = 4

OUT_ENV_VAR = "MTDIFFUSION_OUT"


def _out_dir(args, cfg: Config) -> Path:
    if args.out:
        return Path(args.out)
    if "directory" in cfg.output:
        return Path(cfg.output["directory"])
    env = os.environ.get(OUT_ENV_VAR)
    if env:
        return Path(env)
    return Path("results") / Path(args.config).stem


def _fmt(value: float) -> str:
    return format(float(value), "g")


def _load(args) -> Config:
    return load_config(args.config)


def _clustered_setup(cfg: Config):
    """Network spec plus the clustered-variant matrices of a config."""
    spec = build_network(cfg)
    exp = build_experiment(cfg)
    mu, tau = exp.hyperparams[0]
    _, matrices, p, _ = materialize_variant(exp, "clustered", mu, tau)
    return spec, exp, matrices, p


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec, exp, matrices, p = _clustered_setup(cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = validate_network(spec, matrices.A, matrices.C, p)
    if not report.ok:
        print("validation failure:\n" + str(report), file=sys.stderr)
        return EXIT_VALIDATION
    print(f"network: {spec.n_nodes} nodes, {spec.n_clusters} clusters, "
          f"L={spec.filter_length}: constraints ok")
    if not isinstance(exp.model, LinearModelSpec):
        print("localization model: stability metrics not applicable")
        return EXIT_OK
    warn = False
    for mu, tau in exp.hyperparams:
        moments = theory.build_moments(spec, matrices.A, matrices.C, p,
                                       tau, mu, exp.model)
        bound = theory.step_size_bound(moments)
        rho_b = theory.spectral_radius_b(moments)
        rho_k = rho_b ** 2
        status = "stable" if (mu < bound and rho_b < 1.0) else "WARNING"
        if status == "WARNING":
            warn = True
        print(f"mu={_fmt(mu)} tau={_fmt(tau)}: step-size bound {bound:.6g}, "
              f"rho(B)={rho_b:.6f}, rho(K)={rho_k:.6f} [{status}]")
    return EXIT_STABILITY if warn else EXIT_OK


def _write_results(result, cfg: Config, out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    entries = []
    steady = []
    for (variant, mu, tau), cell in result.curves.items():
        stem = f"sim__{variant}__mu{_fmt(mu)}__tau{_fmt(tau)}.csv"
        cell.sim.write_csv(out / stem)
        entries.append({"file": stem, "variant": variant, "mu": mu, "tau": tau,
                        "kind": "sim"})
        if cell.theory_transient is not None:
            tstem = f"theory__{variant}__mu{_fmt(mu)}__tau{_fmt(tau)}.csv"
            cell.theory_transient.write_csv(out / tstem)
            entries.append({"file": tstem, "variant": variant, "mu": mu,
                            "tau": tau, "kind": "theory"})
        if cell.theory_steady is not None:
            steady.append((variant, mu, tau, cell.theory_steady))
    if steady:
        write_steady_state_csv(out / "steady_state.csv", steady)
        entries.append({"file": "steady_state.csv", "variant": None,
                        "mu": None, "tau": None, "kind": "steady"})
    meta = {"runs": result.n_runs, "iterations": result.n_iters,
            "seed": result.seed, "warnings": result.warnings}
    write_manifest(out / "manifest.json", entries, meta)
    if "gnuplot" in cfg.output["formats"]:
        curve_files = [e["file"] for e in entries if e["kind"] in ("sim", "theory")]
        write_gnuplot_script(out / "plot.gp", curve_files, out.name)
    return [e["file"] for e in entries]


def _simulate_config(cfg: Config, args) -> int:
    try:
        exp = build_experiment(cfg, seed=args.seed, runs=args.runs,
                               workers=args.workers)
    except (ConfigError, ValueError, RuntimeError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        result = monte_carlo(exp)
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = _out_dir(args, cfg)
    files = _write_results(result, cfg, out)
    print(f"wrote {len(files)} files to {out} "
          f"({result.elapsed:.1f}s, {result.n_runs} runs)")
    for (variant, mu, tau), cell in result.curves.items():
        line = (f"final MSD {variant} mu={_fmt(mu)} tau={_fmt(tau)}: "
                f"{cell.sim.final_db:.2f} dB")
        if cell.theory_steady is not None:
            db = 10.0 * np.log10(cell.theory_steady)
            line += f" (steady-state model {db:.2f} dB)"
        if cell.excluded:
            line += f" [{cell.excluded} diverged runs excluded]"
        print(line)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return _simulate_config(cfg, args)


def cmd_theory(args) -> int:
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.model["type"] != "linear":
        print("validation failure: the closed-form models require the linear "
              "data model; localization configs are not supported here",
              file=sys.stderr)
        return EXIT_VALIDATION
    try:
        spec, exp, matrices, p = _clustered_setup(cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    entries = []
    steady = []
    rc = EXIT_OK
    from .curves import MsdCurve
    for mu, tau in exp.hyperparams:
        moments = theory.build_moments(spec, matrices.A, matrices.C, p,
                                       tau, mu, exp.model)
        bound = theory.step_size_bound(moments)
        bias = theory.bias_limit(moments) if theory.spectral_radius_b(moments) < 1 \
            else None
        print(f"mu={_fmt(mu)} tau={_fmt(tau)}: step-size bound {bound:.6g}")
        if bias is not None:
            print(f"  asymptotic bias norm {np.linalg.norm(bias):.6g}")
        try:
            zeta = theory.transient_msd(moments, exp.n_iters)
            zss = theory.steady_state_msd(moments)
        except theory.StabilityError as exc:
            print(f"  no steady state: {exc}")
            rc = EXIT_STABILITY
            continue
        stem = f"theory__clustered__mu{_fmt(mu)}__tau{_fmt(tau)}.csv"
        MsdCurve(zeta, flag="theory").write_csv(out / stem)
        entries.append({"file": stem, "variant": "clustered", "mu": mu,
                        "tau": tau, "kind": "theory"})
        steady.append(("clustered", mu, tau, zss))
        print(f"  steady-state MSD {10.0 * np.log10(zss):.2f} dB")
    if steady:
        write_steady_state_csv(out / "steady_state.csv", steady)
        entries.append({"file": "steady_state.csv", "variant": None,
                        "mu": None, "tau": None, "kind": "steady"})
    write_manifest(out / "manifest.json", entries,
                   {"iterations": exp.n_iters, "seed": exp.seed})
    print(f"wrote {len(entries)} files to {out}")
    return rc


def cmd_localization(args) -> int:
    path = args.config or bundled_config_path(
        "localization" if args.scale == "paper" else "localization_desk")
    try:
        cfg = load_config(path)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.config = path
    return _simulate_config(cfg, args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtdiffusion",
        description="Clustered multitask diffusion LMS: simulation and models")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="path to a YAML config")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed")
        sp.add_argument("--runs", type=int, default=None,
                        help="override the number of Monte-Carlo runs")
        sp.add_argument("--out", default=None,
                        help=f"output directory (default: config, then ${OUT_ENV_VAR})")
        sp.add_argument("--workers", type=int, default=None,
                        help="parallel worker processes")

    sp = sub.add_parser("validate", help="check a config and its stability metrics")
    add_common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("simulate", help="run the configured experiment")
    add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("theory", help="evaluate the closed-form models only")
    add_common(sp)
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("localization",
                        help="simulate the bundled localization experiment")
    add_common(sp, config_required=False)
    sp.add_argument("--scale", choices=("paper", "desk"), default="paper")
    sp.set_defaults(func=cmd_localization)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
