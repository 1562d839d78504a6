"""Render sweep-CSV curves: one line per scheme, mean with a std band.

This layer never recomputes physics; it only aggregates and draws what the
sweep CSV contains.  Styling is pinned by the committed style sheet so the
golden images are byte-stable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE_PATH = Path(__file__).with_name("curves.mplstyle")

REQUIRED_COLUMNS = ("sweep_variable", "value", "scheme", "sinr_db", "status")

# the known sweep figure families and their axis labels
FIGURES = {
    "power": ("P_dBW", "total transmit power (dBW)"),
    "elements": ("N", "reflecting elements N"),
    "qos": ("Gamma_dB", "communication SNR requirement (dB)"),
    "antennas": ("M", "transmit/receive antennas M"),
    "pathloss": ("alpha_t", "direct-path loss exponent"),
    "distance": ("d_rt", "surface-to-target distance (m)"),
    "convergence": ("iterations", "iteration"),
}

SCHEME_LABELS = {
    "ci+ris": "CI, with RIS",
    "ci+no_ris": "CI, no RIS",
    "mmse+ris": "MMSE, with RIS",
    "mmse+no_ris": "MMSE, no RIS",
    "zf+ris": "ZF, with RIS",
    "zf+no_ris": "ZF, no RIS",
    "radar_only+ris": "radar only, with RIS",
    "radar_only+no_ris": "radar only, no RIS",
}


class RenderError(ValueError):
    """Raised when the CSV cannot produce the requested figure."""


@dataclass(frozen=True)
class FigureSpec:
    csv_path: str
    x_column: str                       # value of sweep_variable to select
    output_path: str
    schemes: tuple[str, ...] = ()       # empty tuple = every scheme present
    x_label: str | None = None
    y_label: str = "radar output SINR (dB)"
    title: str | None = None


def figure_spec(name: str, csv_path: str, output_path: str,
                schemes: tuple[str, ...] = ()) -> FigureSpec:
    """Spec for one of the named figure families."""
    if name not in FIGURES:
        raise RenderError(f"unknown figure {name!r}; choose from "
                          f"{sorted(FIGURES)}")
    variable, label = FIGURES[name]
    return FigureSpec(csv_path=csv_path, x_column=variable,
                      output_path=output_path, schemes=schemes, x_label=label)


def load_series(spec: FigureSpec) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Aggregate the CSV into per-scheme (x, mean, std) arrays."""
    groups: dict[tuple[str, float], list[float]] = {}
    present: list[str] = []
    with open(spec.csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(REQUIRED_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise RenderError(f"CSV lacks required columns: {sorted(missing)}")
        for row in reader:
            if row["sweep_variable"] != spec.x_column:
                continue
            if row["status"].startswith("error") or not row["sinr_db"]:
                continue
            scheme = row["scheme"]
            if spec.schemes and scheme not in spec.schemes:
                continue
            if scheme not in present:
                present.append(scheme)
            groups.setdefault((scheme, float(row["value"])), []).append(
                float(row["sinr_db"]))
    if not groups:
        raise RenderError(
            f"no rows for sweep variable {spec.x_column!r}"
            + (f" and schemes {list(spec.schemes)}" if spec.schemes else ""))
    series = {}
    for scheme in present:
        xs = sorted(v for (s, v) in groups if s == scheme)
        mean = np.array([np.mean(groups[(scheme, v)]) for v in xs])
        std = np.array([np.std(groups[(scheme, v)], ddof=1)
                        if len(groups[(scheme, v)]) > 1 else 0.0 for v in xs])
        series[scheme] = (np.array(xs), mean, std)
    return series


def render(spec: FigureSpec) -> Path:
    """Draw the figure and write it; returns the output path."""
    series = load_series(spec)
    out = Path(spec.output_path)
    with plt.style.context(str(STYLE_PATH)):
        fig, ax = plt.subplots()
        for scheme, (xs, mean, std) in series.items():
            label = SCHEME_LABELS.get(scheme, scheme)
            dashed = scheme.endswith("no_ris")
            line, = ax.plot(xs, mean, linestyle="--" if dashed else "-",
                            marker="o", label=label)
            ax.fill_between(xs, mean - std, mean + std,
                            color=line.get_color(), alpha=0.15, linewidth=0)
        ax.set_xlabel(spec.x_label or spec.x_column)
        ax.set_ylabel(spec.y_label)
        if spec.title:
            ax.set_title(spec.title)
        ax.legend()
        fig.savefig(out, metadata={"Software": "dfrcplots"})
        plt.close(fig)
    return out
