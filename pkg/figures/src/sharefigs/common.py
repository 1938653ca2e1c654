"""Shared rendering plumbing: deterministic output, labels, CLI shape."""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .schema import ERROR, OK, SchemaError, read_rows  # noqa: E402

V2I_LABEL = "V2I sum rate"
V2V_LABEL = "V2V success transmission probability"

METRIC_LABELS = {
    "v2i_sum_rate_bps": V2I_LABEL + " (bps)",
    "v2v_success_prob": V2V_LABEL,
    "mean_cumulative_reward": "mean episodic cumulative reward",
}

# fixed order so legends and bar groups never depend on dict ordering
def ordered_unique(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def save(fig, out_path):
    """Write the figure without run-dependent metadata."""
    fig.savefig(out_path, dpi=120, metadata={"Software": "sharefigs"})
    plt.close(fig)


def run_render(figure_id, render_fn, argv):
    """Standard CLI: --in CSV --out IMAGE; exit 0 ok, 1 warning, 2 error."""
    parser = argparse.ArgumentParser(description=f"render {figure_id} from its CSV")
    parser.add_argument("--in", dest="csv_path", required=True)
    parser.add_argument("--out", dest="out_path", required=True)
    args = parser.parse_args(argv)
    try:
        rows, status = read_rows(args.csv_path, figure_id)
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return ERROR
    if status != OK:
        print("warning: extra columns ignored", file=sys.stderr)
    fig = render_fn(rows)
    save(fig, args.out_path)
    print(f"wrote {args.out_path}")
    return status
