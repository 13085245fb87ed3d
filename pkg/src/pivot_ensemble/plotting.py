"""PNG figures for reports and path-score tables.

Uses the Agg backend and strips the PNG software/date metadata so that two
renders of the same data are byte-identical.
"""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .path_selection import PathScoreTable  # noqa: E402

PNG_METADATA = {"Software": None}
DPI = 100


def _save(fig, out: str | os.PathLike) -> None:
    fig.tight_layout()
    fig.savefig(out, format="png", dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def plot_report(reports: Sequence, out: str | os.PathLike) -> None:
    """Grouped bars, one group per metric, one bar per system."""
    columns = [c for c in ("BLEU", "chrF++", "COMET") if any(r.values()[c] is not None for r in reports)]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / max(len(reports), 1)
    for i, r in enumerate(reports):
        xs = [j + i * width for j in range(len(columns))]
        ys = [r.values()[c] or 0.0 for c in columns]
        ax.bar(xs, ys, width=width, label=r.system)
    ax.set_xticks([j + width * (len(reports) - 1) / 2 for j in range(len(columns))])
    ax.set_xticklabels(columns)
    ax.set_ylabel("score")
    ax.set_ylim(0, 100)
    ax.legend(fontsize="small", frameon=False)
    _save(fig, out)


def plot_path_scores(table: PathScoreTable, out: str | os.PathLike, highlight: int = 0) -> None:
    """Horizontal bars, best path on top; the first ``highlight`` rows are filled dark."""
    ranked = table.ranked()
    labels = [p.code for p, _ in ranked]
    scores = [s for _, s in ranked]
    colors = ["#333333" if i < highlight else "#bbbbbb" for i in range(len(ranked))]
    fig, ax = plt.subplots(figsize=(5, 0.3 * len(ranked) + 1))
    ax.barh(range(len(ranked)), scores, color=colors)
    ax.set_yticks(range(len(ranked)))
    ax.set_yticklabels(labels, fontsize="small")
    ax.invert_yaxis()
    src, tgt = table.lang_pair
    ax.set_xlabel(f"{table.metric.value} ({src.code} to {tgt.code})")
    _save(fig, out)
