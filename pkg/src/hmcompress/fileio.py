"""
Plain-text matrices and CSV output.

Matrix text format: first line ``rows cols``, then one line per row of
space-separated values printed with 17 significant digits, which round-trips
every finite double exactly.
"""
import csv

import numpy as np

from . import __version__
from .linalg import as_matrix

__all__ = ["write_matrix", "read_matrix", "write_csv", "read_csv"]


def write_matrix(path, A):
    A = as_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        for row in A:
            fh.write(" ".join("%.17g" % v for v in row))
            fh.write("\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("first line must be 'rows cols'")
        m, n = int(header[0]), int(header[1])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ValueError(f"expected {m} rows of {n} values")
    return as_matrix(np.array([[float(v) for v in r] for r in rows]))


def write_csv(path, columns, rows, meta=None):
    """
    Write ``rows`` under ``columns`` with ``#``-prefixed header comments
    (``meta`` items plus the package version).
    """
    meta = dict(meta or {})
    meta.setdefault("version", __version__)
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    """Return ``(meta, columns, rows)`` with cells as strings."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    table = list(csv.reader(lines))
    return meta, table[0], table[1:]
