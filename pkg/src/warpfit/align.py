"""Dynamic time warping and its soft (differentiable) relaxation.

Tables use 1-based interior indexing: ``r`` has shape ``(m + 1, n + 1)`` with
``r[0, 0] = 0`` and ``+inf`` on the rest of row 0 and column 0, so every path
is forced to start at cell ``(1, 1)``. Paths are reported 1-based as well.

The dynamic programs run in small numba kernels; everything else is numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .seqcore import UsageError, check_cost_kind, check_gamma, check_pair, pairwise_cost

BRUTE_FORCE_MAX_CELLS = 49


@dataclass(frozen=True)
class DPTable:
    """Accumulated-cost table of one sequence pair."""

    r: np.ndarray
    delta: np.ndarray
    gamma: float

    @property
    def value(self):
        return float(self.r[-1, -1])

    @property
    def shape(self):
        m, n = self.delta.shape
        return m, n


@dataclass(frozen=True)
class SoftDtwGrad:
    """Gradient of a soft-DTW value.

    ``d_delta[i, j]`` is the expected occupancy of cell ``(i, j)`` under the
    Gibbs distribution over alignment paths; ``d_a`` chains it through the
    frame distance to the frames of the first sequence.
    """

    loss: float
    d_delta: np.ndarray
    d_a: np.ndarray


@numba.njit(cache=True, nogil=True)
def _forward_kernel(delta, gamma):
    m, n = delta.shape
    r = np.full((m + 1, n + 1), np.inf)
    r[0, 0] = 0.0
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            up = r[i - 1, j]
            left = r[i, j - 1]
            diag = r[i - 1, j - 1]
            lo = min(up, left, diag)
            if gamma == 0.0 or lo == np.inf:
                smin = lo
            else:
                s = 0.0
                if up < np.inf:
                    s += math.exp(-(up - lo) / gamma)
                if left < np.inf:
                    s += math.exp(-(left - lo) / gamma)
                if diag < np.inf:
                    s += math.exp(-(diag - lo) / gamma)
                smin = lo - gamma * math.log(s)
            r[i, j] = delta[i - 1, j - 1] + smin
    return r


@numba.njit(cache=True, nogil=True)
def _backward_kernel(delta, r, gamma):
    # e[i, j] = dL/d r[i, j] = dL/d delta[i-1, j-1]; each cell distributes
    # its adjoint to predecessors with their soft-min weights.
    m, n = delta.shape
    e = np.zeros((m + 2, n + 2))
    e[m, n] = 1.0
    for i in range(m, 0, -1):
        for j in range(n, 0, -1):
            if i == m and j == n:
                continue
            acc = 0.0
            rij = r[i, j]
            if i < m:
                acc += e[i + 1, j] * math.exp((r[i + 1, j] - delta[i, j - 1] - rij) / gamma)
            if j < n:
                acc += e[i, j + 1] * math.exp((r[i, j + 1] - delta[i - 1, j] - rij) / gamma)
            if i < m and j < n:
                acc += e[i + 1, j + 1] * math.exp((r[i + 1, j + 1] - delta[i, j] - rij) / gamma)
            e[i, j] = acc
    return e[1:m + 1, 1:n + 1].copy()


def _table(a, b, gamma, kind):
    delta = pairwise_cost(a, b, kind)
    return DPTable(r=_forward_kernel(delta, gamma), delta=delta, gamma=gamma)


def dtw(a, b, kind="euclidean"):
    """Classic DTW distance and its accumulated-cost table.

    >>> dtw([[0.], [1.], [2.]], [[0.], [2.]])[0]
    1.0
    """
    table = _table(a, b, 0.0, kind)
    return table.value, table


def soft_dtw(a, b, gamma=1.0, kind="euclidean"):
    """Soft-DTW value (the smoothed minimum over all alignment path costs)."""
    gamma = check_gamma(gamma)
    table = _table(a, b, gamma, kind)
    return table.value, table


def soft_dtw_backward(table):
    """Adjoint ``dL/d delta`` of a soft table built with ``gamma > 0``."""
    if table.gamma <= 0:
        raise UsageError("soft_dtw_backward needs a table built with gamma > 0")
    return _backward_kernel(table.delta, table.r, table.gamma)


def cost_grad_a(a, b, d_delta, kind="euclidean"):
    """Chain ``d_delta`` through the frame distance to the frames of ``a``.

    Coincident frames under the euclidean cost get subgradient 0.
    """
    kind = check_cost_kind(kind)
    if kind == "sqeuclidean":
        w = 2.0 * d_delta
    else:
        dist = pairwise_cost(a, b, kind)
        w = np.divide(d_delta, dist, out=np.zeros_like(d_delta), where=dist > 0)
    return w.sum(axis=1)[:, None] * a - w @ b


def soft_dtw_grad(a, b, gamma=1.0, kind="euclidean"):
    """Soft-DTW value with gradients w.r.t. the cost matrix and the frames of ``a``."""
    gamma = check_gamma(gamma, strict=True)
    a, b = check_pair(a, b)
    table = _table(a, b, gamma, kind)
    d_delta = _backward_kernel(table.delta, table.r, gamma)
    return SoftDtwGrad(loss=table.value, d_delta=d_delta, d_a=cost_grad_a(a, b, d_delta, kind))


def _argmin_preds(r, i, j):
    preds = ((i - 1, j - 1), (i - 1, j), (i, j - 1))
    best = min(r[p] for p in preds)
    return [p for p in preds if r[p] == best]


def backtrack(table):
    """Recover one optimal alignment path from a hard (``gamma = 0``) table.

    Among all optimal paths, the one returned is traced from ``(1, 1)`` and
    prefers at each step the diagonal move, then ``(i + 1, j)``, then
    ``(i, j + 1)``. Only exact argmin links of the table are followed, so the
    path cost summed from the start reproduces ``r[m, n]`` bit for bit.
    """
    if table.gamma != 0:
        raise UsageError("backtrack needs a hard DTW table (gamma = 0); soft tables have no discrete path")
    r = table.r
    m, n = table.shape
    # cells lying on some optimal path, found by walking argmin links back from (m, n)
    on_path = {(m, n)}
    stack = [(m, n)]
    while stack:
        cell = stack.pop()
        if cell == (1, 1):
            continue
        for p in _argmin_preds(r, *cell):
            if p not in on_path:
                on_path.add(p)
                stack.append(p)
    path = [(1, 1)]
    i, j = 1, 1
    while (i, j) != (m, n):
        for nxt in ((i + 1, j + 1), (i + 1, j), (i, j + 1)):
            if nxt in on_path and (i, j) in _argmin_preds(r, *nxt):
                i, j = nxt
                break
        else:  # pragma: no cover - argmin links always connect (1, 1) to (m, n)
            raise RuntimeError("inconsistent DTW table")
        path.append((i, j))
    return path


def path_cost(delta, path):
    """Sum of ``delta`` along a 1-based path, accumulated from the start."""
    total = 0.0
    for i, j in path:
        total = delta[i - 1, j - 1] + total
    return float(total)


def iter_paths(m, n):
    """Yield every feasible 1-based path from ``(1, 1)`` to ``(m, n)``."""
    def walk(i, j, prefix):
        prefix.append((i, j))
        if (i, j) == (m, n):
            yield list(prefix)
        else:
            if i < m and j < n:
                yield from walk(i + 1, j + 1, prefix)
            if i < m:
                yield from walk(i + 1, j, prefix)
            if j < n:
                yield from walk(i, j + 1, prefix)
        prefix.pop()

    yield from walk(1, 1, [])


def brute_force_dtw(a, b, gamma=0.0, kind="euclidean"):
    """Exhaustive reference for :func:`dtw` / :func:`soft_dtw`.

    Enumerates every feasible path and takes the (soft) minimum of the path
    costs. Only meant for tiny inputs, ``m * n <= 49``.
    """
    a, b = check_pair(a, b)
    gamma = check_gamma(gamma)
    m, n = len(a), len(b)
    if m * n > BRUTE_FORCE_MAX_CELLS:
        raise UsageError(f"brute force limited to m*n <= {BRUTE_FORCE_MAX_CELLS}, got {m}x{n}")
    delta = pairwise_cost(a, b, kind)
    costs = np.array([path_cost(delta, p) for p in iter_paths(m, n)])
    lo = costs.min()
    if gamma == 0:
        return float(lo)
    return float(lo - gamma * np.log(np.sum(np.exp(-(costs - lo) / gamma))))
