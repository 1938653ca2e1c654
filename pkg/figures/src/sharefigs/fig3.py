"""Both headline metrics versus the number of adaptation gradient steps."""

from __future__ import annotations

import sys
from collections import defaultdict

import matplotlib.pyplot as plt

from .common import METRIC_LABELS, run_render

METRICS = ("v2i_sum_rate_bps", "v2v_success_prob")


def render(rows):
    fig, axes = plt.subplots(2, 1, figsize=(6.0, 7.0), sharex=True)
    for ax, metric in zip(axes, METRICS):
        by_step = defaultdict(list)
        for r in rows:
            if r["metric"] == metric:
                by_step[int(r["gradient_step"])].append(float(r["value"]))
        steps = sorted(by_step)
        means = [sum(by_step[s]) / len(by_step[s]) for s in steps]
        for s in steps:
            ax.plot([s] * len(by_step[s]), by_step[s], ".", color="tab:gray",
                    alpha=0.4, markersize=4)
        ax.plot(steps, means, marker="o", color="tab:red")
        ax.set_ylabel(METRIC_LABELS[metric])
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("gradient steps in adaptation")
    fig.tight_layout()
    return fig


def main(argv=None):
    return run_render("fig3", render, argv)


if __name__ == "__main__":
    sys.exit(main())
