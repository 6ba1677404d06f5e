"""Core sequence handling: validation, the smoothed minimum, pairwise costs, CSV I/O.

A sequence is a ``(T, D)`` float64 array, one frame per row. Every other
module in the package goes through :func:`check_sequence` so that shape and
finiteness errors surface early with a uniform exception type.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.utils import check_array

COST_KINDS = ("euclidean", "sqeuclidean")

_COST_ALIASES = {
    "euclidean": "euclidean",
    "sqeuclidean": "sqeuclidean",
    "squared-euclidean": "sqeuclidean",
    "squared_euclidean": "sqeuclidean",
}


class UsageError(ValueError):
    """Invalid arguments: wrong shapes, out-of-range hyperparameters, etc."""


class ParseError(ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


def check_sequence(seq, name="sequence"):
    """Return ``seq`` as a C-contiguous ``(T, D)`` float64 array.

    1-D input is treated as a single feature (``D = 1``). Raises
    :class:`UsageError` for empty or non-finite input.
    """
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    try:
        arr = check_array(arr, dtype=np.float64, order="C", ensure_all_finite=True,
                          ensure_min_samples=1, ensure_min_features=1,
                          input_name=name)
    except ValueError as exc:
        raise UsageError(f"{name}: {exc}") from exc
    return arr


def check_pair(a, b):
    a = check_sequence(a, "a")
    b = check_sequence(b, "b")
    if a.shape[1] != b.shape[1]:
        raise UsageError(f"dimension mismatch: a has D={a.shape[1]}, b has D={b.shape[1]}")
    return a, b


def check_gamma(gamma, strict=False):
    """Validate a smoothing temperature; ``strict`` requires ``gamma > 0``."""
    try:
        g = float(gamma)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"gamma must be a real number, got {gamma!r}") from exc
    if not math.isfinite(g) or g < 0:
        raise UsageError(f"gamma must be finite and >= 0, got {g}")
    if strict and g == 0:
        raise UsageError("gamma must be > 0 (gamma = 0 is the non-differentiable hard minimum)")
    return g


def check_cost_kind(kind):
    try:
        return _COST_ALIASES[kind]
    except (KeyError, TypeError):
        raise UsageError(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}") from None


def soft_min(values, gamma):
    """Smoothed minimum ``-gamma * log(sum(exp(-v / gamma)))``.

    ``gamma == 0`` gives the exact minimum. The sum is shifted by ``min(v)``
    so nothing overflows; ``+inf`` entries carry zero weight.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise UsageError("soft_min of an empty list")
    if np.isnan(v).any() or np.isneginf(v).any():
        raise UsageError("soft_min values must be finite or +inf")
    g = check_gamma(gamma)
    lo = v.min()
    if g == 0 or math.isinf(lo):
        return float(lo)
    finite = v[np.isfinite(v)]
    return float(lo - g * math.log(np.exp(-(finite - lo) / g).sum()))


def pairwise_cost(a, b, kind="euclidean"):
    """Matrix of frame distances ``delta[i, j] = dist(a[i], b[j])``."""
    a, b = check_pair(a, b)
    kind = check_cost_kind(kind)
    return cdist(a, b, metric=kind)


def read_sequence(path):
    """Parse a headerless comma-separated sequence file."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise ParseError(exc.strerror or str(exc), path=path) from exc
    return parse_rows(lines, path, first_line=1)


def parse_rows(lines, path, first_line):
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise ParseError("empty file", path=path)
    rows = []
    width = None
    for offset, line in enumerate(lines):
        lineno = first_line + offset
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise ParseError(f"expected {width} columns, found {len(fields)}", path, lineno)
        try:
            row = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"unparsable number in {line!r}", path, lineno) from None
        if not all(math.isfinite(x) for x in row):
            raise ParseError("non-finite value", path, lineno)
        rows.append(row)
    return np.array(rows, dtype=np.float64)


def format_rows(arr):
    return "".join(",".join(format(x, ".17g") for x in row) + "\n" for row in arr)


def write_sequence(seq, path):
    """Write ``seq`` with 17 significant digits so a re-read is bit-identical."""
    arr = check_sequence(seq)
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_rows(arr))
