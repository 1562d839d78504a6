"""Command-line entry points: single design runs, parameter sweeps, and
CSV aggregation."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import comm, driver, experiments
from .scene import (SceneConfig, build_scene, desk_config, link_rng,
                    load_config, paper_config)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CELL_FAILED = 3


def _scene_config(args) -> SceneConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.profile == "paper":
        cfg = paper_config()
    else:
        cfg = desk_config()
    if args.seed is not None:
        cfg = cfg.with_updates(seed=args.seed)
    return cfg


def _options(args) -> driver.DriverOptions:
    kw = {}
    if getattr(args, "al_tol", None) is not None:
        kw["al_tol"] = args.al_tol
    if getattr(args, "solver_tol", None) is not None:
        kw["solver_tol"] = args.solver_tol
    if getattr(args, "max_iter", None) is not None:
        kw["max_iter"] = args.max_iter
    return driver.DriverOptions(**kw)


def cmd_design(args) -> int:
    cfg = _scene_config(args)
    scheme = driver.Scheme.parse(args.scheme)
    channels = build_scene(cfg)
    frame = qos = None
    if scheme.constrained:
        frame = comm.generate_symbols(link_rng(cfg.seed, "symbols"),
                                      cfg.K, cfg.L, cfg.Omega)
        qos = comm.QosSpec.from_config(cfg, scheme.metric)
    report = driver.run(channels, scheme, frame=frame, qos=qos,
                        options=_options(args))
    payload = {
        "scheme": scheme.name,
        "seed": cfg.seed,
        "status": report.status,
        "iterations": report.iterations,
        "sinr_db": report.sinr_db,
        "min_qos_margin": report.min_margin,
        "zf_residual": report.zf_residual,
        "x_real": report.x.real.tolist(),
        "x_imag": report.x.imag.tolist(),
        "phi_real": report.phi.real.tolist(),
        "phi_imag": report.phi.imag.tolist(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n",
                                  encoding="utf-8")
    if args.trace:
        import csv as _csv
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            w = _csv.writer(fh)
            w.writerow(["iteration", "al_value", "sinr_db", "min_margin",
                        "res_x", "res_phi"])
            for t in report.trace:
                w.writerow([t.iteration, repr(t.al_value), repr(t.sinr_db),
                            repr(t.min_margin), repr(t.res_x), repr(t.res_phi)])
    print(f"{scheme.name}: status={report.status} iterations={report.iterations} "
          f"SINR={report.sinr_db:.3f} dB min_margin={report.min_margin:.3e}")
    return EXIT_OK if report.status != "infeasible" else EXIT_CELL_FAILED


def cmd_sweep(args) -> int:
    cfg = _scene_config(args)
    values: list = []
    for tok in args.values.split(","):
        tok = tok.strip()
        values.append(int(tok) if args.variable in ("N", "M", "iterations")
                      else float(tok))
    spec = experiments.SweepSpec(
        sweep_variable=args.variable,
        values=tuple(values),
        schemes=tuple(s.strip() for s in args.schemes.split(",")),
        trials=args.trials,
        base=cfg,
        output_path=args.out,
        master_seed=cfg.seed,
        ser_trials=args.ser_trials,
        options=_options(args),
    )
    path, failures = experiments.run_sweep(spec, workers=args.workers)
    print(f"wrote {path} ({failures} failed cells)")
    return EXIT_CELL_FAILED if failures else EXIT_OK


def cmd_summarize(args) -> int:
    rows, bad = experiments.summarize(args.csv)
    if args.out:
        experiments.write_summary(rows, args.out)
    for row in rows:
        print(f"{row['sweep_variable']}={row['value']} {row['scheme']}: "
              f"n={row['count']} SINR={row['sinr_db_mean']:.3f} "
              f"+/- {row['sinr_db_std']:.3f} dB")
    if bad:
        print(f"skipped malformed lines: {bad}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risdfrc",
                                description="RIS-aided dual-function radar-"
                                            "communication waveform designer")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scene config JSON (dB units)")
    common.add_argument("--profile", choices=("desk", "paper"), default="desk")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--al-tol", dest="al_tol", type=float, default=None)
    common.add_argument("--solver-tol", dest="solver_tol", type=float, default=None)
    common.add_argument("--max-iter", dest="max_iter", type=int, default=None)

    d = sub.add_parser("design", parents=[common],
                       help="run one joint design and report the result")
    d.add_argument("--scheme", default="ci+ris",
                   help="metric+ris|no_ris, e.g. ci+ris, zf+no_ris, radar_only+ris")
    d.add_argument("--out", help="write the design report JSON here")
    d.add_argument("--trace", help="write the iteration trace CSV here")
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("sweep", parents=[common],
                       help="Monte-Carlo sweep over one scene parameter")
    s.add_argument("--variable", required=True,
                   choices=experiments.SWEEP_VARIABLES)
    s.add_argument("--values", required=True,
                   help="comma-separated sweep values")
    s.add_argument("--schemes", default="ci+ris,ci+no_ris")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--ser-trials", dest="ser_trials", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("summarize", help="aggregate a sweep CSV")
    m.add_argument("--csv", required=True)
    m.add_argument("--out")
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
