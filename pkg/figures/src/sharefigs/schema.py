"""CSV schemas for the figure datasets and their validation.

Each figure id owns one documented header. Missing columns are a hard
error; extra columns only warn (the renderers ignore them).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

SCHEMAS = {
    "fig2": ["outer_loop", "eval_mean_cumulative_reward"],
    "fig3": ["gradient_step", "metric", "value", "seed"],
    "fig45": ["payload_multiple", "policy", "metric", "mean", "ci95"],
    "fig67": ["episode", "variant", "metric", "mean"],
}

OK = 0
WARNING = 1
ERROR = 2


class SchemaError(ValueError):
    """Input CSV does not carry the documented columns."""


def validate_schema(path, figure_id):
    """Compare a CSV header against the documented schema.

    Returns (status, message) with status OK/WARNING/ERROR; WARNING means
    extra columns beyond the schema (renderable), ERROR means the file or
    required columns are missing.
    """
    if figure_id not in SCHEMAS:
        return ERROR, f"unknown figure id {figure_id!r}"
    path = Path(path)
    if not path.exists():
        return ERROR, f"no such file: {path}"
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            return ERROR, "file is empty (no header)"
    want = SCHEMAS[figure_id]
    missing = [c for c in want if c not in header]
    extra = [c for c in header if c not in want]
    if missing:
        return ERROR, f"missing columns: {missing}; header diff: -{missing} +{extra}"
    if extra:
        return WARNING, f"extra columns ignored: {extra}"
    return OK, "ok"


def read_rows(path, figure_id):
    """Validated rows as dicts; raises SchemaError on a hard mismatch."""
    status, message = validate_schema(path, figure_id)
    if status == ERROR:
        raise SchemaError(message)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise SchemaError("no data rows")
    return rows, status


def main(argv=None):
    parser = argparse.ArgumentParser(description="validate a figure CSV header")
    parser.add_argument("--in", dest="path", required=True)
    parser.add_argument("--figure", required=True, choices=sorted(SCHEMAS))
    args = parser.parse_args(argv)
    status, message = validate_schema(args.path, args.figure)
    print(message)
    return status


if __name__ == "__main__":
    sys.exit(main())
