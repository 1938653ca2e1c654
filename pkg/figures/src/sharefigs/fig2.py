"""Meta-training convergence: evaluation reward versus outer loop."""

from __future__ import annotations

import sys

import matplotlib.pyplot as plt

from .common import run_render


def render(rows):
    pts = sorted((int(r["outer_loop"]), float(r["eval_mean_cumulative_reward"]))
                 for r in rows)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", color="tab:blue")
    ax.set_xlabel("outer loop")
    ax.set_ylabel("averaged episodic cumulative reward")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def main(argv=None):
    return run_render("fig2", render, argv)


if __name__ == "__main__":
    sys.exit(main())
