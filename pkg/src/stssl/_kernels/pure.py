"""Pure NumPy/SciPy implementations of the hot kernels.

These are the reference semantics; the compiled extension in ``_core.pyx``
must produce identical output on identical input. Neighbor lists are always
processed in ascending index order so that cluster expansion (and therefore
border-point ownership) does not depend on the spatial index used.
"""

from collections import deque

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based clustering with exact Euclidean radius queries.

    A point is core when it has at least ``min_pts`` neighbors within
    ``eps`` (itself included). Clusters grow breadth-first from core points
    scanned in index order; non-core points are claimed by the first cluster
    that reaches them, everything unclaimed is labeled ``NOISE`` (-1).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")

    tree = cKDTree(points)
    visited = np.zeros(n, dtype=bool)
    next_label = 0

    def neighbors(i: int) -> list[int]:
        return sorted(tree.query_ball_point(points[i], eps))

    for seed in range(n):
        if visited[seed]:
            continue
        visited[seed] = True
        seed_neigh = neighbors(seed)
        if len(seed_neigh) < min_pts:
            continue  # may still be claimed later as a border point
        cid = next_label
        next_label += 1
        labels[seed] = cid
        queue: deque[int] = deque()
        for q in seed_neigh:
            if not visited[q]:
                visited[q] = True
                labels[q] = cid
                queue.append(q)
            elif labels[q] == NOISE:
                labels[q] = cid
        while queue:
            j = queue.popleft()
            j_neigh = neighbors(j)
            if len(j_neigh) < min_pts:
                continue  # border point: member but does not expand
            for q in j_neigh:
                if not visited[q]:
                    visited[q] = True
                    labels[q] = cid
                    queue.append(q)
                elif labels[q] == NOISE:
                    labels[q] = cid
    return labels


def solve_lsap(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-cost injective assignment covering min(rows, cols) entries.

    Shortest-augmenting-path algorithm with dual potentials, O(n^2 * m).
    Ties are broken by the lowest column index, which keeps the result
    identical to the compiled kernel.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    r, c = cost.shape
    if r == 0 or c == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if not np.all(np.isfinite(cost)):
        raise ValueError("costs must be finite")
    if np.any(cost < 0):
        raise ValueError("costs must be nonnegative")

    transposed = r > c
    a = np.ascontiguousarray(cost.T) if transposed else cost
    n, m = a.shape

    # 1-based duals and column matching; p[j] is the row matched to column j.
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        way = np.zeros(m + 1, dtype=np.int64)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = a[i0 - 1, :] - u[i0] - v[1:]
            unused = ~used[1:]
            improve = unused & (cur < minv[1:])
            minv1 = minv[1:]
            minv1[improve] = cur[improve]
            way1 = way[1:]
            way1[improve] = j0
            masked = np.where(unused, minv1, np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            sel = used.nonzero()[0]
            u[p[sel]] += delta
            v[sel] -= delta
            minv1[unused] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = int(way[j0])
            p[j0] = p[j1]
            j0 = j1

    row_of_col = p[1:] - 1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(m):
        if row_of_col[j] >= 0:
            col_of_row[row_of_col[j]] = j
    rows = np.arange(n, dtype=np.int64)
    if transposed:
        return col_of_row.copy(), rows
    return rows, col_of_row.copy()
