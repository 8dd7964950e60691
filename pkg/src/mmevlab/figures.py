"""Figure rendering for the report: PNGs next to the delimited tables.

Uses the non-interactive Agg backend so report runs work headless. Each
renderer skips silently when its data series is empty, so sparse traces
still produce a complete report directory.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

if TYPE_CHECKING:
    from .report import ReportBundle
    from .runs import QuartileStats


def _quartile_plot(stats: Mapping[int, "QuartileStats"], xlabel: str, title: str, path: Path) -> bool:
    if not stats:
        return False
    xs = sorted(stats)
    median = [stats[x].median for x in xs]
    q25 = [stats[x].q25 for x in xs]
    q75 = [stats[x].q75 for x in xs]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.fill_between(xs, q25, q75, alpha=0.25, label="25-75% quartiles")
    ax.plot(xs, median, marker="o", label="median")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("payment (ETH)")
    ax.set_title(title)
    ax.set_xticks(xs)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def _count_plot(counts: Mapping[int, int], path: Path) -> bool:
    if not counts:
        return False
    xs = sorted(counts)
    ys = [counts[x] for x in xs]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(xs, ys)
    if max(ys) / max(min(y for y in ys if y > 0), 1) > 100:
        ax.set_yscale("log")
    ax.set_xlabel("run length k")
    ax.set_ylabel("observed maximal runs")
    ax.set_title("Observed consecutive-win runs by length")
    ax.set_xticks(xs)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def render_report_figures(bundle: "ReportBundle", out_dir: Path) -> list[Path]:
    """Render fig2/fig3/fig4 PNGs from a report bundle; returns paths written."""
    out_dir = Path(out_dir)
    written: list[Path] = []
    fig2 = out_dir / "fig2.png"
    if _quartile_plot(bundle.fig2_pooled, "run length k",
                      "Winning payment by run length", fig2):
        written.append(fig2)
    fig3 = out_dir / "fig3.png"
    if _count_plot(bundle.fig3, fig3):
        written.append(fig3)
    fig4 = out_dir / "fig4.png"
    if _quartile_plot(bundle.fig4_pooled, "position within run",
                      "Winning payment by position within runs", fig4):
        written.append(fig4)
    return written
