"""Measurement matrices: synthetic generation, CSV ingestion, filtering.

Synthetic stream
----------------
:func:`gen_synthetic` is defined by the following algorithm, so that it can
be reproduced outside numpy:

1. Run the Philox4x64-10 counter-based generator with key words
   ``(seed mod 2**64, seed >> 64)`` on the counters ``(1, 0, 0, 0)``,
   ``(2, 0, 0, 0)``, ... and take the four 64-bit output words of each
   block in order as ``x_0, x_1, ...``.  This is
   ``numpy.random.Philox(key=seed).random_raw()``.
2. Map each output to a uniform ``u_j = (x_j >> 11) * 2**-53`` in ``[0, 1)``.
3. Consume uniforms in pairs ``(u_{2t}, u_{2t+1})`` and apply Box-Muller:
   ``r = sqrt(-2 log(1 - u_{2t}))``, ``theta = 2 pi u_{2t+1}``, producing
   ``r cos(theta)`` then ``r sin(theta)``.
4. Fill the ``m x n`` matrix in row-major order with these normals times
   ``n ** -0.25``; an odd final normal is discarded.
"""

import csv
import math

import numpy as np


class ParseError(ValueError):
    def __init__(self, row, col, text):
        super().__init__(f"row {row}, column {col}: cannot use {text!r} as a number")
        self.row = row
        self.col = col


class RaggedRows(ValueError):
    def __init__(self, row, expected, got):
        super().__init__(f"row {row} has {got} fields, expected {expected}")
        self.row = row


class AllColumnsDropped(ValueError):
    pass


def philox_uniforms(seed, count):
    """First ``count`` uniforms of the documented stream for ``seed``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    raw = np.random.Philox(key=int(seed)).random_raw(int(count))
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normals(seed, count):
    """First ``count`` Box-Muller normals of the documented stream."""
    pairs = (int(count) + 1) // 2
    u = philox_uniforms(seed, 2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    out = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()
    return out[:count]


def gen_synthetic(m, n, seed=0):
    """``m`` rows drawn i.i.d. from ``N(0, I / sqrt(n))``."""
    if not m >= n >= 1:
        raise ValueError(f"need m >= n >= 1, got m={m}, n={n}")
    return standard_normals(seed, m * n).reshape(m, n) * n**-0.25


def _parse_cell(text):
    try:
        value = float(text)
    except ValueError:
        return None
    return value


def load_csv_matrix(path):
    """Read a numeric CSV; rows are observations, columns variables.

    The first row is treated as a header when any of its cells does not
    parse as a number.  Blank lines are ignored.
    """
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if any(c.strip() for c in r)]
    if rows and any(_parse_cell(c) is None for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise RaggedRows(lineno, width, len(cells))
        for c, text in enumerate(cells):
            value = _parse_cell(text)
            if value is None or not math.isfinite(value):
                raise ParseError(lineno, c + 1, text)
            data[r, c] = value
    return data


def write_csv_matrix(fh, M, header=None):
    """Write ``M`` with shortest round-trip float formatting."""
    w = csv.writer(fh, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for row in np.atleast_2d(np.asarray(M, dtype=float)):
        w.writerow([repr(float(v)) for v in row])


def save_csv_matrix(path, M, header=None):
    with open(path, "w", newline="") as fh:
        write_csv_matrix(fh, M, header)


def preprocess_activity(M, min_fraction=1.0, standardize=False):
    """Drop columns that are nonzero on fewer than ``min_fraction`` of rows.

    Returns ``(M_kept, kept)`` where ``kept`` are the original column
    indices.  With ``standardize`` each kept column is scaled to unit
    root-mean-square.
    """
    if not 0.0 <= min_fraction <= 1.0:
        raise ValueError("min_fraction must lie in [0, 1]")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    active = np.mean(M != 0, axis=0)
    kept = np.flatnonzero(active >= min_fraction)
    if kept.size == 0:
        raise AllColumnsDropped("no column meets the activity threshold")
    out = M[:, kept]
    if standardize:
        out = out / np.sqrt(np.mean(out**2, axis=0))
    return out, kept


def abilene_like_fixture(days=153, links=120, active=89, seed=0):
    """Synthetic stand-in for daily link utilization.

    Exactly ``active`` of the ``links`` columns are nonzero on every day;
    each remaining column has an idle stretch of at least one day.  Values
    are positive with a per-link scale and a day-to-day fluctuation.
    """
    if not 0 < active <= links:
        raise ValueError("need 0 < active <= links")
    if days < 2:
        raise ValueError("need at least two days")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    scale = np.exp(rng.normal(0.0, 1.0, links))
    level = np.exp(rng.normal(0.0, 0.5, (days, links)))
    M = scale * level
    inactive = rng.permutation(links)[: links - active]
    for j in inactive:
        start = rng.integers(0, days)
        length = rng.integers(1, days - start + 1)
        M[start:start + length, j] = 0.0
    return M
