# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_pykernels``.

Operation order matches the pure-Python module so results agree exactly
(``betainc`` to a few ulp).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, lgamma, fabs, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF CF_MAX_ITER = 1000
DEF CF_EPS = 1e-15
DEF CF_TINY = 1e-300


cdef inline bint _before(double da, Py_ssize_t ia, double db, Py_ssize_t ib) noexcept nogil:
    return da < db or (da == db and ia < ib)


def knn_predict(train_x, train_y, query_x, Py_ssize_t k):
    cdef const double[:, ::1] tx = np.ascontiguousarray(train_x, dtype=np.float64)
    cdef const double[::1] ty = np.ascontiguousarray(train_y, dtype=np.float64)
    cdef const double[:, ::1] qx = np.ascontiguousarray(query_x, dtype=np.float64)
    cdef Py_ssize_t n = tx.shape[0], d = tx.shape[1], m = qx.shape[0]
    cdef Py_ssize_t i, j, r, pos
    cdef double dist, diff, acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef double *best_d = <double *> malloc(k * sizeof(double))
    cdef Py_ssize_t *best_i = <Py_ssize_t *> malloc(k * sizeof(Py_ssize_t))
    if best_d == NULL or best_i == NULL:
        free(best_d)
        free(best_i)
        raise MemoryError()
    try:
        with nogil:
            for i in range(m):
                for r in range(k):
                    best_d[r] = INFINITY
                    best_i[r] = n
                for j in range(n):
                    dist = 0.0
                    for r in range(d):
                        diff = tx[j, r] - qx[i, r]
                        dist = dist + diff * diff
                    if not _before(dist, j, best_d[k - 1], best_i[k - 1]):
                        continue
                    # insertion into the sorted k-best buffer
                    pos = k - 1
                    while pos > 0 and _before(dist, j, best_d[pos - 1], best_i[pos - 1]):
                        best_d[pos] = best_d[pos - 1]
                        best_i[pos] = best_i[pos - 1]
                        pos -= 1
                    best_d[pos] = dist
                    best_i[pos] = j
                acc = 0.0
                for r in range(k):
                    acc = acc + ty[best_i[r]]
                o[i] = acc / k
    finally:
        free(best_d)
        free(best_i)
    return out


def kth_smallest(values, Py_ssize_t rank):
    buf = np.array(values, dtype=np.float64, copy=True)
    cdef double[::1] v = buf
    cdef Py_ssize_t lo = 0, hi = v.shape[0] - 1, target = rank - 1
    cdef Py_ssize_t i, j
    cdef double pivot, tmp
    with nogil:
        while lo < hi:
            pivot = v[(lo + hi) // 2]
            i = lo
            j = hi
            while i <= j:
                while v[i] < pivot:
                    i += 1
                while v[j] > pivot:
                    j -= 1
                if i <= j:
                    tmp = v[i]
                    v[i] = v[j]
                    v[j] = tmp
                    i += 1
                    j -= 1
            if target <= j:
                hi = j
            elif target >= i:
                lo = i
            else:
                break
    return float(v[target])


cdef void _order_desc(const double[:, ::1] p, Py_ssize_t row, Py_ssize_t *order) noexcept nogil:
    # insertion sort, descending probability, ascending index on ties (stable)
    cdef Py_ssize_t kk = p.shape[1], a, b, cur
    for a in range(kk):
        cur = a
        b = a
        while b > 0 and p[row, order[b - 1]] < p[row, cur]:
            order[b] = order[b - 1]
            b -= 1
        order[b] = cur


def aps_scores(probs, labels):
    cdef const double[:, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef const long long[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = p.shape[0], kk = p.shape[1], i, r
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t *order = <Py_ssize_t *> malloc(kk * sizeof(Py_ssize_t))
    if order == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                _order_desc(p, i, order)
                acc = 0.0
                for r in range(kk):
                    acc = acc + p[i, order[r]]
                    if order[r] == lab[i]:
                        break
                o[i] = acc
    finally:
        free(order)
    return out


def aps_sets(probs, double qhat, bint include_crossing=False):
    cdef const double[:, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], kk = p.shape[1], i, r
    cdef double acc
    mask = np.zeros((n, kk), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] mk = mask
    cdef Py_ssize_t *order = <Py_ssize_t *> malloc(kk * sizeof(Py_ssize_t))
    if order == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                _order_desc(p, i, order)
                acc = 0.0
                for r in range(kk):
                    acc = acc + p[i, order[r]]
                    if include_crossing:
                        mk[i, order[r]] = 1
                        if not (acc < qhat):
                            break
                    elif acc <= qhat:
                        mk[i, order[r]] = 1
                    else:
                        break
    finally:
        free(order)
    return mask.view(bool)


cdef double _betacf(double a, double b, double x) noexcept nogil:
    cdef double qab = a + b, qap = a + 1.0, qam = a - 1.0
    cdef double c = 1.0, d, h, aa, delta
    cdef int m, m2
    d = 1.0 - qab * x / qap
    if fabs(d) < CF_TINY:
        d = CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < CF_TINY:
            d = CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < CF_TINY:
            c = CF_TINY
        d = 1.0 / d
        h = h * (d * c)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < CF_TINY:
            d = CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < CF_TINY:
            c = CF_TINY
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if fabs(delta - 1.0) < CF_EPS:
            break
    return h


def betainc(double a, double b, x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    flat = arr.reshape(-1)
    cdef const double[::1] xv = flat
    out = np.empty(flat.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double xi, front
    cdef double lbeta = lgamma(a + b) - lgamma(a) - lgamma(b)
    cdef double split = (a + 1.0) / (a + b + 2.0)
    with nogil:
        for i in range(n):
            xi = xv[i]
            if xi <= 0.0:
                o[i] = 0.0
            elif xi >= 1.0:
                o[i] = 1.0
            else:
                front = exp(lbeta + a * log(xi) + b * log1p(-xi))
                if xi < split:
                    o[i] = front * _betacf(a, b, xi) / a
                else:
                    o[i] = 1.0 - front * _betacf(b, a, 1.0 - xi) / b
    return out.reshape(arr.shape)
