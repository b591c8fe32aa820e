"""CSV reports and their companion matplotlib figures.

Every delimited report the CLI emits gets a rendered figure next to it:
energy traces as convergence curves, residual histograms as bar plots, and
comparison metrics as grouped bars.  CSV files are byte-deterministic for a
fixed run; figures are for human inspection only.
"""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import Histogram
from .solvers import EnergyTrace


def write_metrics_csv(path, rows) -> None:
    """Rows of (method, psnr, rmse, bme) under the fixed header."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("method,psnr,rmse,bme\n")
        for method, psnr_v, rmse_v, bme_v in rows:
            fh.write(f"{method},{float(psnr_v)!r},{float(rmse_v)!r},{float(bme_v)!r}\n")


def write_histogram_csv(path, hist: Histogram) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for lo, hi, n in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            fh.write(f"{float(lo)!r},{float(hi)!r},{int(n)}\n")


def read_metrics_csv(path):
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            (row["method"], float(row["psnr"]), float(row["rmse"]), float(row["bme"]))
            for row in reader
        ]


def plot_trace(path, trace: EnergyTrace, title: str = "energy convergence") -> None:
    iters = [r.iteration for r in trace.records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iters, [r.total for r in trace.records], label="total", lw=2)
    ax.plot(iters, [r.data for r in trace.records], label="data", alpha=0.8)
    if any(r.aquasi for r in trace.records):
        ax.plot(iters, [r.aquasi for r in trace.records], label="prior", alpha=0.8)
    if any(r.tv for r in trace.records):
        ax.plot(iters, [r.tv for r in trace.records], label="tv", alpha=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_histogram(path, hist: Histogram, title: str = "quantile residual") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    widths = hist.edges[1:] - hist.edges[:-1]
    ax.bar(hist.centers, hist.counts, width=widths, color="tab:blue", edgecolor="none")
    ax.set_xlabel("residual")
    ax.set_ylabel("pixel count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_metrics(path, rows, title: str = "method comparison") -> None:
    methods = [r[0] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.5))
    for ax, idx, label in zip(axes, (1, 2, 3), ("PSNR [dB]", "RMSE", "BME")):
        vals = [r[idx] for r in rows]
        ax.bar(methods, vals, color="tab:blue")
        ax.set_ylabel(label)
        ax.tick_params(axis="x", rotation=20)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
