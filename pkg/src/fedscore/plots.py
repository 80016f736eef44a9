"""Figure rendering for the simulate and compare report paths.

Boxplots of centered estimates per method (one panel per coordinate)
mirror the simulation-study figures; the comparison forest plot shows
point estimates with their confidence intervals side by side.  All
rendering targets files through the Agg backend; nothing here touches
estimation.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_BOX_COLOR = "#4878b0"
_REF_COLOR = "#b04848"


def boxplot_estimates(records, truth, methods, setting: str, out_path) -> None:
    """Per-method boxplots of (estimate - truth), failures dropped."""
    truth = np.asarray(truth, dtype=float)
    p = truth.shape[0]
    fig, axes = plt.subplots(1, p, figsize=(1.2 + 1.1 * len(methods) * p, 3.4), squeeze=False)
    for coord in range(p):
        ax = axes[0][coord]
        series = []
        for method in methods:
            vals = [
                r.estimate[coord] - truth[coord]
                for r in records
                if r.method == method and not r.failed
            ]
            series.append(vals)
        box = ax.boxplot(series, tick_labels=methods, patch_artist=True, showfliers=True,
                         flierprops={"marker": ".", "markersize": 3})
        for patch in box["boxes"]:
            patch.set_facecolor(_BOX_COLOR)
            patch.set_alpha(0.6)
        ax.axhline(0.0, color=_REF_COLOR, linewidth=1, linestyle="--")
        ax.set_ylabel(f"estimate - truth (coord {coord})" if p > 1 else "estimate - truth")
        ax.set_title(setting if coord == 0 else "")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def forest_plot(rows: list[dict], out_path) -> None:
    """Point estimates with CI whiskers, one row per method x coordinate.

    ``rows`` carry method, coord, estimate, ci_lower, ci_upper.
    """
    labels = []
    est, lo, hi = [], [], []
    for row in rows:
        suffix = f" [{row['coord']}]" if row.get("coord", 0) or any(
            r.get("coord", 0) for r in rows
        ) else ""
        labels.append(f"{row['method']}{suffix}")
        est.append(row["estimate"])
        lo.append(row["ci_lower"])
        hi.append(row["ci_upper"])
    ypos = np.arange(len(labels))[::-1]
    fig, ax = plt.subplots(figsize=(6, 1.0 + 0.45 * len(labels)))
    ax.errorbar(
        est, ypos,
        xerr=[np.array(est) - np.array(lo), np.array(hi) - np.array(est)],
        fmt="o", color=_BOX_COLOR, ecolor=_BOX_COLOR, capsize=3,
    )
    ax.axvline(0.0, color=_REF_COLOR, linewidth=1, linestyle="--")
    ax.set_yticks(ypos)
    ax.set_yticklabels(labels)
    ax.set_xlabel("estimate with confidence interval")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
