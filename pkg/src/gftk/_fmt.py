"""Locale-independent number formatting shared by every writer."""

import numpy as np


def fmt(x) -> str:
    """Shortest decimal string that round-trips (at most 17 significant digits)."""
    x = float(x)
    if x == 0.0:
        return "0.0"
    return repr(x)


def fmt_row(values) -> str:
    return ",".join(fmt(v) for v in np.asarray(values, dtype=float).ravel())


def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="\n") as fh:
        for row in M:
            fh.write(fmt_row(row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if ln:
                rows.append([float(t) for t in ln.split(",")])
    return np.array(rows, dtype=float)
