# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: grid-indexed DBSCAN expansion and the assignment solver.

Output must be bit-identical to ``stssl._kernels.pure``; keep the traversal
order (ascending neighbor indices, FIFO expansion, first-minimum tie breaks)
in sync with that module.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc, qsort

cnp.import_array()

ctypedef cnp.int64_t i64


cdef int _cmp_i64(const void* a, const void* b) noexcept nogil:
    cdef i64 va = (<const i64*> a)[0]
    cdef i64 vb = (<const i64*> b)[0]
    if va < vb:
        return -1
    if va > vb:
        return 1
    return 0


cdef Py_ssize_t _lower_bound(i64[::1] arr, i64 key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _upper_bound(i64[::1] arr, i64 key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] <= key:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _gather_neighbors(Py_ssize_t i, double[:, ::1] pts, i64[:, ::1] cell,
                                  i64 d0, i64 d1, i64 d2,
                                  i64[::1] skeys, i64[::1] order,
                                  double eps2, i64* out) noexcept nogil:
    cdef double px = pts[i, 0], py = pts[i, 1], pz = pts[i, 2]
    cdef i64 cx = cell[i, 0], cy = cell[i, 1], cz = cell[i, 2]
    cdef Py_ssize_t cnt = 0, lo, hi, t
    cdef i64 gx, gy, gz, key, j
    cdef double dx, dy, dz
    for gx in range(cx - 1, cx + 2):
        if gx < 0 or gx >= d0:
            continue
        for gy in range(cy - 1, cy + 2):
            if gy < 0 or gy >= d1:
                continue
            for gz in range(cz - 1, cz + 2):
                if gz < 0 or gz >= d2:
                    continue
                key = (gx * d1 + gy) * d2 + gz
                lo = _lower_bound(skeys, key)
                hi = _upper_bound(skeys, key)
                for t in range(lo, hi):
                    j = order[t]
                    dx = pts[j, 0] - px
                    dy = pts[j, 1] - py
                    dz = pts[j, 2] - pz
                    if dx * dx + dy * dy + dz * dz <= eps2:
                        out[cnt] = j
                        cnt += 1
    qsort(out, cnt, sizeof(i64), _cmp_i64)
    return cnt


def dbscan_labels(points, double eps, long min_pts):
    """Grid-indexed DBSCAN; see the pure backend for the exact semantics."""
    pts_np = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts_np.shape[0]
    labels_np = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels_np
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")

    cells_f = np.floor(pts_np / eps)
    if not np.all(np.isfinite(cells_f)) or np.any(np.abs(cells_f) > 2.0 ** 40):
        raise OverflowError("coordinate extent too large for the grid index")
    cells = cells_f.astype(np.int64)
    mins = cells.min(axis=0)
    dims = cells.max(axis=0) - mins + 1
    if float(dims[0]) * float(dims[1]) * float(dims[2]) > 2.0 ** 62:
        raise OverflowError("grid too large")
    rel = np.ascontiguousarray(cells - mins)
    keys = (rel[:, 0] * dims[1] + rel[:, 1]) * dims[2] + rel[:, 2]
    order_np = np.argsort(keys, kind="stable").astype(np.int64)
    skeys_np = np.ascontiguousarray(keys[order_np])

    cdef double[:, ::1] pts = pts_np
    cdef i64[:, ::1] cell = rel
    cdef i64[::1] order = order_np
    cdef i64[::1] skeys = skeys_np
    cdef i64[::1] labels = labels_np
    cdef i64 d0 = dims[0], d1 = dims[1], d2 = dims[2]
    cdef double eps2 = eps * eps

    cdef i64* nbuf = <i64*> malloc(n * sizeof(i64))
    cdef i64* queue = <i64*> malloc(n * sizeof(i64))
    cdef char* visited = <char*> malloc(n * sizeof(char))
    if nbuf == NULL or queue == NULL or visited == NULL:
        free(nbuf); free(queue); free(visited)
        raise MemoryError()

    cdef Py_ssize_t seed, k, cnt, qhead, qtail
    cdef i64 cid = 0, q, j
    try:
        with nogil:
            for seed in range(n):
                visited[seed] = 0
            for seed in range(n):
                if visited[seed]:
                    continue
                visited[seed] = 1
                cnt = _gather_neighbors(seed, pts, cell, d0, d1, d2, skeys, order, eps2, nbuf)
                if cnt < min_pts:
                    continue
                labels[seed] = cid
                qhead = 0
                qtail = 0
                for k in range(cnt):
                    q = nbuf[k]
                    if not visited[q]:
                        visited[q] = 1
                        labels[q] = cid
                        queue[qtail] = q
                        qtail += 1
                    elif labels[q] == -1:
                        labels[q] = cid
                while qhead < qtail:
                    j = queue[qhead]
                    qhead += 1
                    cnt = _gather_neighbors(j, pts, cell, d0, d1, d2, skeys, order, eps2, nbuf)
                    if cnt < min_pts:
                        continue
                    for k in range(cnt):
                        q = nbuf[k]
                        if not visited[q]:
                            visited[q] = 1
                            labels[q] = cid
                            queue[qtail] = q
                            qtail += 1
                        elif labels[q] == -1:
                            labels[q] = cid
                cid += 1
    finally:
        free(nbuf)
        free(queue)
        free(visited)
    return labels_np


def solve_lsap(cost):
    """Shortest augmenting path assignment; mirrors the pure backend."""
    cost_np = np.asarray(cost, dtype=np.float64)
    if cost_np.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    cdef Py_ssize_t r = cost_np.shape[0], c = cost_np.shape[1]
    if r == 0 or c == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if not np.all(np.isfinite(cost_np)):
        raise ValueError("costs must be finite")
    if np.any(cost_np < 0):
        raise ValueError("costs must be nonnegative")

    cdef bint transposed = r > c
    a_np = np.ascontiguousarray(cost_np.T) if transposed else np.ascontiguousarray(cost_np)
    cdef Py_ssize_t n = a_np.shape[0], m = a_np.shape[1]

    u_np = np.zeros(n + 1)
    v_np = np.zeros(m + 1)
    p_np = np.zeros(m + 1, dtype=np.int64)
    way_np = np.zeros(m + 1, dtype=np.int64)
    minv_np = np.zeros(m + 1)
    used_np = np.zeros(m + 1, dtype=np.int8)

    cdef double[:, ::1] a = a_np
    cdef double[::1] u = u_np
    cdef double[::1] v = v_np
    cdef i64[::1] p = p_np
    cdef i64[::1] way = way_np
    cdef double[::1] minv = minv_np
    cdef cnp.int8_t[::1] used = used_np

    cdef Py_ssize_t i, j
    cdef i64 j0, j1, i0
    cdef double cur, delta
    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(m + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, m + 1):
                    if not used[j]:
                        cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(m + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while j0 != 0:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1

    row_of_col = p_np[1:] - 1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(m):
        if row_of_col[j] >= 0:
            col_of_row[row_of_col[j]] = j
    rows = np.arange(n, dtype=np.int64)
    if transposed:
        return col_of_row.copy(), rows
    return rows, col_of_row.copy()
