"""Minimum-cost bipartite assignment for rectangular cost matrices."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from . import _kernels

#: Marks a pair that may never be matched.  Any non-finite entry is treated the same way.
FORBIDDEN = np.inf


def solve(cost) -> List[Tuple[int, int]]:
    """Solve the rectangular assignment problem.

    ``cost`` is a (rows, cols) array; ``FORBIDDEN`` (or any non-finite value)
    marks disallowed pairs.  Returns (row, col) pairs sorted by row.  The
    matching has the largest possible number of allowed pairs and, among
    those, the smallest total cost.  Rows or columns that cannot be matched
    are simply absent.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {cost.shape}")
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return []
    allowed = np.isfinite(cost)
    if not allowed.any():
        return []

    n = max(rows, cols)
    finite = cost[allowed]
    # shift to non-negative so the sentinel dominates any feasible total
    shifted = cost - finite.min()
    top = float(shifted[allowed].max())
    sentinel = top * (n + 1) + 1.0

    square = np.full((n, n), sentinel)
    square[:rows, :cols] = np.where(allowed, shifted, sentinel)
    col_for_row = _kernels.lsa(square)

    pairs = []
    for r in range(rows):
        c = int(col_for_row[r])
        if c < cols and allowed[r, c]:
            pairs.append((r, c))
    return pairs


def total_cost(cost, pairs) -> float:
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[r, c] for r, c in sorted(pairs)))
