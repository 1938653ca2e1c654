"""Byte-stable CSV emission.

Floats are written with repr (shortest round-trip form), so a rerun with
the same config and seed reproduces files byte for byte.
"""

from __future__ import annotations

import csv


def format_value(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    """rows: iterable of dicts keyed by the header names."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(row[h]) for h in header])


def read_csv(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return list(reader), reader.fieldnames
