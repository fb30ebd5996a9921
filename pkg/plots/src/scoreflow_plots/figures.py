"""Figures from harness result files.

This package is deliberately decoupled from the solver package: it
consumes only the documented file formats (the results CSV with its
fixed column order, the slope-summary JSON, and the snapshot CSVs with
columns ``x_center,density``) and can be pointed at any directory of
outputs.
"""

from __future__ import annotations

import csv
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "scoreflow-plots"  # deterministic vector output

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "RESULTS_COLUMNS",
    "ConvergenceReport",
    "PlotSpec",
    "SeriesFit",
    "plot_convergence",
    "plot_density_panels",
    "read_results_csv",
]

# the harness CSV schema, bit-exact column order
RESULTS_COLUMNS = [
    "config_hash",
    "d",
    "delta",
    "perturbation",
    "n_steps",
    "h",
    "seed",
    "tv",
    "rel_mean_err",
    "rel_cov_err",
    "wall_time_s",
]

_METRICS = ("tv", "rel_mean_err", "rel_cov_err")
_METRIC_LABELS = {
    "tv": "total variation",
    "rel_mean_err": "relative mean error",
    "rel_cov_err": "relative covariance error",
}
# line style / marker per dimension series, smallest d first
_SERIES_STYLES = [(":", "x"), ("-.", "o"), ("--", "^"), ("-", "s")]

_SNAPSHOT_RE = re.compile(r"snapshot_(ode|pde)_delta([0-9.eE+-]+)_t([0-9.eE+-]+)\.csv$")


@dataclass(frozen=True)
class PlotSpec:
    """Inputs and destination of one figure."""

    inputs: tuple[Path, ...]
    kind: str  # "density_panels" | "convergence_curves"
    output: Path
    xlabel: str = ""
    ylabel: str = ""


@dataclass(frozen=True)
class SeriesFit:
    metric: str
    d: int
    x: str
    slope: float
    intercept: float
    n_points: int


@dataclass
class ConvergenceReport:
    series: list[SeriesFit] = field(default_factory=list)
    figure_paths: list[Path] = field(default_factory=list)

    def slope_for(self, metric: str, d: int) -> float:
        for s in self.series:
            if s.metric == metric and s.d == d:
                return s.slope
        raise KeyError(f"no fitted series for metric={metric}, d={d}")


def read_results_csv(path) -> list[dict]:
    """Rows of a results CSV; the header must match the schema exactly."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"results file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty results file: {path}") from None
        if header != RESULTS_COLUMNS:
            raise ValueError(
                f"{path}: columns {header} do not match the harness schema {RESULTS_COLUMNS}"
            )
        rows = []
        for raw in reader:
            row = dict(zip(header, raw))
            for key in ("delta", "h", "tv", "rel_mean_err", "rel_cov_err", "wall_time_s"):
                row[key] = float(row[key])
            for key in ("d", "n_steps"):
                row[key] = int(row[key])
            rows.append(row)
    if not rows:
        raise ValueError(f"results file has a header but no rows: {path}")
    return rows


def _loglog_fit(xs, ys) -> tuple[float, float]:
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(intercept)


def plot_convergence(results_csv, output, x_name: str | None = None) -> ConvergenceReport:
    """Log-log error-vs-delta (or vs h) curves, slope annotated per series.

    One panel per metric; one line style per dimension found in the CSV.
    Defaults to plotting against delta when at least two distinct
    positive deltas exist, falling back to the step size otherwise (the
    natural axis for delta = 0 sweeps).
    """
    rows = read_results_csv(results_csv)
    if x_name is None:
        positive_deltas = {row["delta"] for row in rows if row["delta"] > 0}
        x_name = "delta" if len(positive_deltas) >= 2 else "h"

    dims = sorted({row["d"] for row in rows})
    report = ConvergenceReport()
    fig, axes = plt.subplots(1, 3, figsize=(13, 4), sharex=True)

    for ax, metric in zip(axes, _METRICS):
        for i, d in enumerate(dims):
            style, marker = _SERIES_STYLES[i % len(_SERIES_STYLES)]
            xs, ys = [], []
            skipped = 0
            for row in rows:
                if row["d"] != d:
                    continue
                xv, yv = row[x_name], row[metric]
                if xv > 0 and np.isfinite(yv) and yv > 0:
                    xs.append(xv)
                    ys.append(yv)
                else:
                    skipped += 1
            if skipped:
                warnings.warn(
                    f"{metric}, d={d}: excluded {skipped} non-positive or non-finite row(s)"
                )
            if len(set(xs)) < 2:
                continue
            slope, intercept = _loglog_fit(xs, ys)
            report.series.append(
                SeriesFit(metric=metric, d=d, x=x_name, slope=slope,
                          intercept=intercept, n_points=len(xs))
            )
            order = np.argsort(xs)
            xa, ya = np.asarray(xs)[order], np.asarray(ys)[order]
            ax.loglog(xa, ya, linestyle=style, marker=marker,
                      label=f"d={d}: slope {slope:.3f}")
        ax.set_xlabel(x_name)
        ax.set_ylabel(_METRIC_LABELS[metric])
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)

    fig.tight_layout()
    report.figure_paths = _save_both(fig, output)
    plt.close(fig)
    return report


def _read_snapshot(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"snapshot file not found: {path}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # emptiness is raised explicitly below
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        raise ValueError(f"empty snapshot file: {path}")
    return data


def discover_snapshots(directory, source: str) -> tuple[list[float], list[float]]:
    """(deltas, forward times) found as snapshot files of the given source."""
    deltas, times = set(), set()
    for path in Path(directory).iterdir():
        m = _SNAPSHOT_RE.match(path.name)
        if m and m.group(1) == source:
            deltas.add(float(m.group(2)))
            times.add(float(m.group(3)))
    return sorted(deltas), sorted(times, reverse=True)


def plot_density_panels(
    directory,
    output,
    source: str = "ode",
    deltas: list[float] | None = None,
    times: list[float] | None = None,
) -> list[Path]:
    """Grid of density snapshots: rows = error magnitudes, columns = times.

    Columns run from the noised start (largest forward time) to the
    target (time 0), with the analytic reference overlaid when the
    harness wrote `snapshot_ref_t*.csv` files.
    """
    directory = Path(directory)
    if deltas is None or times is None:
        found_d, found_t = discover_snapshots(directory, source)
        deltas = found_d if deltas is None else deltas
        times = found_t if times is None else times
    if not deltas or not times:
        raise FileNotFoundError(f"no {source} snapshot files found in {directory}")

    n_rows, n_cols = len(deltas), len(times)
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(2.6 * n_cols, 2.2 * n_rows), squeeze=False,
        sharex=True, sharey="row",
    )
    for i, delta in enumerate(deltas):
        for j, t in enumerate(times):
            ax = axes[i][j]
            est = _read_snapshot(directory / f"snapshot_{source}_delta{delta!r}_t{t!r}.csv")
            ref_path = directory / f"snapshot_ref_t{t!r}.csv"
            if ref_path.exists():
                ref = _read_snapshot(ref_path)
                ax.plot(ref[:, 0], ref[:, 1], "k--", lw=0.8, label="reference")
            ax.plot(est[:, 0], est[:, 1], lw=1.0, label="estimate")
            if i == 0:
                ax.set_title(f"t = {t:g}", fontsize=9)
            if j == 0:
                ax.set_ylabel(f"delta = {delta:g}", fontsize=9)
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    paths = _save_both(fig, output)
    plt.close(fig)
    return paths


def _save_both(fig, output) -> list[Path]:
    """Raster for quick inspection plus a vector twin."""
    output = Path(output)
    base = output.with_suffix("") if output.suffix in {".png", ".svg", ".pdf"} else output
    paths = [base.with_suffix(".png"), base.with_suffix(".svg")]
    base.parent.mkdir(parents=True, exist_ok=True)
    for path in paths:
        fig.savefig(path, dpi=150)
    return paths
