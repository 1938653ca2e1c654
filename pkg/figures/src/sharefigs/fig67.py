"""Adaptation curves per variant: metrics versus adaptation episode."""

from __future__ import annotations

import sys

import matplotlib.pyplot as plt

from .common import METRIC_LABELS, ordered_unique, run_render


def render(rows):
    metrics = ordered_unique(r["metric"] for r in rows)
    variants = ordered_unique(r["variant"] for r in rows)
    fig, axes = plt.subplots(len(metrics), 1, figsize=(6.5, 3.2 * len(metrics)),
                             sharex=True, squeeze=False)
    for ax_row, metric in zip(axes[:, 0], metrics):
        for variant in variants:
            pts = sorted(
                (int(r["episode"]), float(r["mean"]))
                for r in rows if r["metric"] == metric and r["variant"] == variant
            )
            ax_row.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                        markersize=3, label=variant)
        ax_row.set_ylabel(METRIC_LABELS.get(metric, metric), fontsize=9)
        ax_row.grid(True, alpha=0.3)
    axes[0, 0].legend(fontsize=8)
    axes[-1, 0].set_xlabel("adaptation episode")
    fig.tight_layout()
    return fig


def main(argv=None):
    return run_render("fig67", render, argv)


if __name__ == "__main__":
    sys.exit(main())
