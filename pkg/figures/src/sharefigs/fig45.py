"""Grouped bars: both headline metrics versus payload size, per policy."""

from __future__ import annotations

import sys

import matplotlib.pyplot as plt
import numpy as np

from .common import METRIC_LABELS, ordered_unique, run_render

METRICS = ("v2i_sum_rate_bps", "v2v_success_prob")


def render(rows):
    payloads = sorted({int(r["payload_multiple"]) for r in rows})
    policies = ordered_unique(r["policy"] for r in rows)
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 7.5))
    width = 0.8 / max(len(policies), 1)
    x = np.arange(len(payloads), dtype=float)
    for ax, metric in zip(axes, METRICS):
        for j, policy in enumerate(policies):
            means, cis = [], []
            for p in payloads:
                match = [r for r in rows
                         if r["policy"] == policy and int(r["payload_multiple"]) == p
                         and r["metric"] == metric]
                means.append(float(match[0]["mean"]) if match else 0.0)
                cis.append(float(match[0]["ci95"]) if match else 0.0)
            ax.bar(x + (j - (len(policies) - 1) / 2.0) * width, means, width,
                   yerr=cis, capsize=2, label=policy)
        ax.set_xticks(x)
        ax.set_xticklabels([f"{p}x1060" for p in payloads])
        ax.set_xlabel("V2V payload size (bytes)")
        ax.set_ylabel(METRIC_LABELS[metric])
        ax.grid(True, axis="y", alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    return fig


def main(argv=None):
    return run_render("fig45", render, argv)


if __name__ == "__main__":
    sys.exit(main())
