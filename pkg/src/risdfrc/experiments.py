"""Sweep harness: paired Monte-Carlo trials over scene parameters, CSV
persistence, and aggregation.

Within one sweep cell every scheme consumes the same channel and symbol
realization (the per-trial seed depends only on the master seed, the value
index, and the trial index), so scheme comparisons are paired.  Result
rows are deterministic; wall-clock timings go to a separate sidecar file
so the main CSV is byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import comm, driver
from .scene import SceneConfig, build_scene, db_to_lin, link_rng

__all__ = [
    "SWEEP_VARIABLES",
    "CSV_COLUMNS",
    "SweepSpec",
    "apply_sweep_value",
    "trial_seed",
    "run_sweep",
    "summarize",
    "write_summary",
]

SWEEP_VARIABLES = ("P_dBW", "N", "Gamma_dB", "M", "alpha_t", "d_rt", "iterations")

# schema v1; the header row is the compatibility contract with the plot layer
CSV_COLUMNS = ("sweep_variable", "value", "scheme", "trial", "seed",
               "channel_hash", "sinr_db", "iterations_used",
               "min_qos_margin", "ser", "status")

TIMING_COLUMNS = ("sweep_variable", "value", "scheme", "trial", "runtime_ms")


@dataclass(frozen=True)
class SweepSpec:
    sweep_variable: str
    values: tuple
    schemes: tuple[str, ...]
    trials: int
    base: SceneConfig
    output_path: str
    master_seed: int = 0
    ser_trials: int = 0            # 0 disables SER measurement
    options: driver.DriverOptions = driver.DriverOptions()

    def __post_init__(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.sweep_variable!r}")
        if not self.values:
            raise ValueError("values must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for s in self.schemes:
            driver.Scheme.parse(s)


def apply_sweep_value(base: SceneConfig, variable: str, value) -> SceneConfig:
    """Scene for one sweep cell; ``iterations`` leaves the scene unchanged."""
    if variable == "P_dBW":
        return base.with_updates(P=db_to_lin(float(value)))
    if variable == "N":
        return base.with_updates(N=int(value))
    if variable == "Gamma_dB":
        return base.with_updates(Gamma_k=(db_to_lin(float(value)),) * base.K)
    if variable == "M":
        return base.with_updates(M=int(value))
    if variable == "alpha_t":
        return base.with_updates(iota_t=float(value))
    if variable == "d_rt":
        return base.with_updates(d_rt=float(value))
    if variable == "iterations":
        return base
    raise ValueError(f"unknown sweep variable {variable!r}")


def trial_seed(master_seed: int, value_index: int, trial: int) -> int:
    """Per-trial seed shared by all schemes of one (value, trial) cell."""
    tag = f"{master_seed}:{value_index}:{trial}".encode()
    return int.from_bytes(hashlib.sha256(tag).digest()[:8], "little") >> 1


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if np.isnan(v):
            return ""
        return repr(v)
    return str(v)


def _run_cell(payload: dict) -> tuple:
    """One (value, scheme, trial) solve; top level so worker pools can pickle."""
    spec: SweepSpec = payload["spec"]
    vi, value, scheme_name, trial = (payload["value_index"], payload["value"],
                                     payload["scheme"], payload["trial"])
    seed = trial_seed(spec.master_seed, vi, trial)
    cfg = apply_sweep_value(spec.base, spec.sweep_variable, value)
    cfg = cfg.with_updates(seed=seed)
    scheme = driver.Scheme.parse(scheme_name)
    t0 = time.perf_counter()
    rows = []
    try:
        channels = build_scene(cfg)
        chash = channels.content_hash()
        frame = qos = None
        if scheme.constrained:
            frame = comm.generate_symbols(link_rng(seed, "symbols"), cfg.K,
                                          cfg.L, cfg.Omega)
            qos = comm.QosSpec.from_config(cfg, scheme.metric)
        report = driver.run(channels, scheme, frame=frame, qos=qos,
                            options=spec.options)
        ser = np.nan
        if spec.ser_trials > 0 and scheme.constrained and report.status != "infeasible":
            ser = float(np.max(comm.simulate_ser(
                report.x, report.phi, frame, qos, spec.ser_trials,
                link_rng(seed, "ser_noise"), channels)))
        if spec.sweep_variable == "iterations":
            for t in report.trace:
                rows.append((spec.sweep_variable, t.iteration, scheme_name,
                             trial, seed, chash, t.sinr_db, t.iteration,
                             t.min_margin, np.nan, report.status))
        else:
            rows.append((spec.sweep_variable, value, scheme_name, trial, seed,
                         chash, report.sinr_db, report.iterations,
                         report.min_margin, ser, report.status))
    except Exception as exc:  # cell failures are recorded, the sweep continues
        rows.append((spec.sweep_variable, value, scheme_name, trial, seed,
                     "", np.nan, 0, np.nan, np.nan, f"error:{type(exc).__name__}"))
    runtime_ms = (time.perf_counter() - t0) * 1e3
    return payload["order"], rows, runtime_ms


def run_sweep(spec: SweepSpec, workers: int = 1) -> tuple[Path, int]:
    """Run every cell, write the results CSV (+ timing sidecar).

    Returns (csv_path, number_of_failed_cells).  Row order and bytes are
    independent of ``workers``.
    """
    cells = []
    order = 0
    for vi, value in enumerate(spec.values):
        for scheme in spec.schemes:
            for trial in range(spec.trials):
                cells.append({"spec": spec, "value_index": vi, "value": value,
                              "scheme": scheme, "trial": trial, "order": order})
                order += 1

    results: dict[int, tuple] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, rows, ms in pool.map(_run_cell, cells, chunksize=1):
                results[key] = (rows, ms)
    else:
        for cell in cells:
            key, rows, ms = _run_cell(cell)
            results[key] = (rows, ms)

    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    failures = 0
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for cell in cells:
            rows, _ = results[cell["order"]]
            for row in rows:
                if str(row[-1]).startswith(("error", "infeasible")):
                    failures += 1
                writer.writerow([_fmt(v) for v in row])
    timing = out.with_suffix(out.suffix + ".timing.csv")
    with open(timing, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMING_COLUMNS)
        for cell in cells:
            _, ms = results[cell["order"]]
            writer.writerow([spec.sweep_variable, _fmt(cell["value"]),
                             cell["scheme"], cell["trial"], f"{ms:.3f}"])
    return out, failures


def summarize(csv_path: str | Path) -> tuple[list[dict], list[int]]:
    """Aggregate mean/std/count per (value, scheme); SINR averaged in dB.

    Returns (aggregate rows sorted by first appearance, malformed line
    numbers that were skipped).
    """
    groups: dict[tuple, dict] = {}
    bad: list[int] = []
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"CSV missing columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = (row["sweep_variable"], row["value"], row["scheme"])
                sinr = float(row["sinr_db"]) if row["sinr_db"] else np.nan
            except (KeyError, TypeError, ValueError):
                bad.append(lineno)
                continue
            g = groups.setdefault(key, {"sinr": [], "ser": [], "n_fail": 0})
            if row["status"] and not row["status"].startswith("error") \
                    and np.isfinite(sinr):
                g["sinr"].append(sinr)
            else:
                g["n_fail"] += 1
            if row["ser"]:
                g["ser"].append(float(row["ser"]))
    out = []
    for (var, value, scheme), g in groups.items():
        vals = np.asarray(g["sinr"])
        out.append({
            "sweep_variable": var,
            "value": value,
            "scheme": scheme,
            "count": int(vals.size),
            "failed": g["n_fail"],
            "sinr_db_mean": float(np.mean(vals)) if vals.size else np.nan,
            "sinr_db_std": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0,
            "ser_mean": float(np.mean(g["ser"])) if g["ser"] else np.nan,
        })
    return out, bad


def write_summary(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    cols = ("sweep_variable", "value", "scheme", "count", "failed",
            "sinr_db_mean", "sinr_db_std", "ser_mean")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])
    return path
