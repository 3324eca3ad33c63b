"""Numeric inner loops with a numba path and a pure-numpy fallback.

Set ``DETREFINE_DISABLE_NUMBA=1`` to force the numpy implementations (or if
numba is not importable).  Both variants stay importable under ``*_numba`` /
``*_numpy`` names so tests and benchmarks can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("DETREFINE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the default install
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# IoU matrix


def iou_matrix_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (n, 4) and (m, 4) corner-form boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.where(inter > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)
    return np.minimum(out, 1.0)


def _iou_matrix_loops(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
        for j in range(m):
            iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
            if iw <= 0.0:
                continue
            ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
            if ih <= 0.0:
                continue
            inter = iw * ih
            union = area_a + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter
            out[i, j] = min(inter / union, 1.0)
    return out


# ---------------------------------------------------------------------------
# Square linear assignment (shortest augmenting path with potentials).
# Returns col_for_row for an n x n finite cost matrix.


def _lsa_loops(cost):
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = inf
            used[j] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_for_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_for_row[p[j] - 1] = j - 1
    return col_for_row


def lsa_numpy(cost: np.ndarray) -> np.ndarray:
    """Same algorithm as the loop kernel, with the column scan vectorised."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_for_row = np.empty(n, dtype=np.int64)
    col_for_row[p[1:] - 1] = np.arange(n)
    return col_for_row


# ---------------------------------------------------------------------------
# Kalman filter on (cx, cy, area, aspect, vcx, vcy, varea) with size-scaled noise.
# Both variants update ``mean`` and ``cov`` in place.


def kf_predict_numpy(mean: np.ndarray, cov: np.ndarray, std_pos: float, std_vel: float) -> None:
    m, P = mean, cov
    if m[2] + m[6] <= 0:
        m[6] = 0.0
    s = max(m[2], 1.0)
    size, r = np.sqrt(s), max(abs(m[3]), 1e-3)
    m[:3] += m[4:7]
    # F P F^T for F = I + shift(velocity -> position)
    P[:3] += P[4:7]
    P[:, :3] += P[:, 4:7]
    q = np.array([std_pos * size, std_pos * size, 2 * std_pos * s, std_vel * r,
                  std_vel * size, std_vel * size, 2 * std_vel * s])
    P[np.diag_indices(7)] += q**2


def kf_update_numpy(mean: np.ndarray, cov: np.ndarray, z: np.ndarray, std_pos: float) -> None:
    m, P = mean, cov
    s = max(m[2], 1.0)
    size, r = np.sqrt(s), max(abs(m[3]), 1e-3)
    R = np.diag(np.array([std_pos * size, std_pos * size, 2 * std_pos * s, 2 * std_pos * r]) ** 2)
    PHt = P[:, :4]
    S = PHt[:4] + R
    K = np.linalg.solve(S, PHt.T).T
    m += K @ (z - m[:4])
    # Joseph form keeps the covariance positive definite
    IKH = np.eye(7)
    IKH[:, :4] -= K
    P_new = IKH @ P @ IKH.T + K @ R @ K.T
    P[:] = 0.5 * (P_new + P_new.T)


def _kf_predict_loops(m, P, std_pos, std_vel):
    if m[2] + m[6] <= 0:
        m[6] = 0.0
    s = max(m[2], 1.0)
    size = np.sqrt(s)
    r = max(abs(m[3]), 1e-3)
    for i in range(3):
        m[i] += m[i + 4]
    for i in range(3):
        for j in range(7):
            P[i, j] += P[i + 4, j]
    for i in range(7):
        for j in range(3):
            P[i, j] += P[i, j + 4]
    q = (std_pos * size, std_pos * size, 2 * std_pos * s, std_vel * r,
         std_vel * size, std_vel * size, 2 * std_vel * s)
    for i in range(7):
        P[i, i] += q[i] * q[i]


def _kf_update_loops(m, P, z, std_pos):
    s = max(m[2], 1.0)
    size = np.sqrt(s)
    r = max(abs(m[3]), 1e-3)
    rd = np.empty(4)
    rd[0] = (std_pos * size) ** 2
    rd[1] = rd[0]
    rd[2] = (2 * std_pos * s) ** 2
    rd[3] = (2 * std_pos * r) ** 2
    # Cholesky of S = P[:4, :4] + R
    L = np.zeros((4, 4))
    for i in range(4):
        for j in range(i + 1):
            acc = P[i, j] + (rd[i] if i == j else 0.0)
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                L[i, i] = np.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    # K = P[:, :4] S^-1, one row at a time via two triangular solves
    K = np.empty((7, 4))
    y = np.empty(4)
    for a in range(7):
        for i in range(4):
            acc = P[a, i]
            for k in range(i):
                acc -= L[i, k] * y[k]
            y[i] = acc / L[i, i]
        for i in range(3, -1, -1):
            acc = y[i]
            for k in range(i + 1, 4):
                acc -= L[k, i] * K[a, k]
            K[a, i] = acc / L[i, i]
    innov = np.empty(4)
    for i in range(4):
        innov[i] = z[i] - m[i]
    for a in range(7):
        for i in range(4):
            m[a] += K[a, i] * innov[i]
    A = np.eye(7)
    for a in range(7):
        for i in range(4):
            A[a, i] -= K[a, i]
    AP = np.zeros((7, 7))
    for a in range(7):
        for b in range(7):
            acc = 0.0
            for k in range(7):
                acc += A[a, k] * P[k, b]
            AP[a, b] = acc
    out = np.zeros((7, 7))
    for a in range(7):
        for b in range(7):
            acc = 0.0
            for k in range(7):
                acc += AP[a, k] * A[b, k]
            for k in range(4):
                acc += K[a, k] * rd[k] * K[b, k]
            out[a, b] = acc
    for a in range(7):
        for b in range(7):
            P[a, b] = 0.5 * (out[a, b] + out[b, a])


if HAVE_NUMBA:
    iou_matrix_numba = njit(cache=True)(_iou_matrix_loops)
    lsa_numba = njit(cache=True)(_lsa_loops)
    kf_predict_numba = njit(cache=True)(_kf_predict_loops)
    kf_update_numba = njit(cache=True)(_kf_update_loops)
else:  # pragma: no cover
    iou_matrix_numba = lsa_numba = kf_predict_numba = kf_update_numba = None


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    if USE_NUMBA:
        return iou_matrix_numba(a, b)
    return iou_matrix_numpy(a, b)


def lsa(cost: np.ndarray) -> np.ndarray:
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if USE_NUMBA:
        return lsa_numba(cost)
    return lsa_numpy(cost)


kf_predict = kf_predict_numba if USE_NUMBA else kf_predict_numpy
kf_update = kf_update_numba if USE_NUMBA else kf_update_numpy
