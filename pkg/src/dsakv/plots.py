"""Figure rendering for analysis reports.

Histograms and sweep curves are drawn with matplotlib and written as SVG
files next to the delimited output. The SVG backend is configured for
reproducible output (fixed hash salt, no embedded creation date).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .cachesim import SweepRow
from .metrics import Histogram, MetricsReport

plt.rcParams["svg.hashsalt"] = "dsakv"

_LABELS = {
    "working_set": ("Working set over window", "distinct entries / top-k"),
    "persistence": ("Selection persistence", "consecutive steps in top-k"),
    "lookback": ("Lookback distance", "distance / top-k"),
    "new_lookups": ("New lookups per step", "new entries / top-k"),
    "inter_layer": ("Consecutive-layer overlap", "shared entries / top-k"),
    "page_utilization": ("KV page utilization per step", "selected / page tokens"),
}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def histogram_figure(hist: Histogram, metric: str, path) -> None:
    title, xlabel = _LABELS.get(metric, (metric, metric))
    fig, ax = plt.subplots(figsize=(5.0, 3.2), constrained_layout=True)
    widths = [hist.bin_edges[i + 1] - hist.bin_edges[i] for i in range(len(hist.counts))]
    ax.bar(hist.bin_edges[:-1], hist.counts, width=widths, align="edge",
           color="#4878a8", edgecolor="white", linewidth=0.4)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("samples")
    _save(fig, path)


def report_figures(report: MetricsReport, out_dir) -> list[Path]:
    """One SVG bar chart per metric histogram; returns the written paths."""
    out_dir = Path(out_dir)
    written = []
    for name, block in report.metrics.items():
        if block.histogram.total == 0:
            continue
        path = out_dir / f"hist_{name}.svg"
        histogram_figure(block.histogram, name, path)
        written.append(path)
    return written


def sweep_figure(rows: list[SweepRow], path) -> None:
    """Slowdown and hit rate versus reserved cache size."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2), constrained_layout=True)
    mb = [r.reserved_bytes / 2**20 for r in rows]
    ax.plot(mb, [r.slowdown for r in rows], marker="o", color="#a84848",
            label="slowdown")
    ax.set_xlabel("reserved LL cache (MiB)")
    ax.set_ylabel("slowdown vs ideal fetch")
    ax2 = ax.twinx()
    ax2.plot(mb, [r.hit_rate for r in rows], marker="s", color="#4878a8",
             label="hit rate")
    ax2.set_ylabel("token hit rate")
    ax.set_title("Reserved-cache sweep")
    _save(fig, path)
