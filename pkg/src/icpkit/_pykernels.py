"""Pure-Python (numpy) implementations of the hot kernels.

Each function mirrors one in ``_ckernels.pyx`` and performs the same floating
point operations in the same order, so that both backends return identical
results for the selection/summation kernels. ``betainc`` agrees to a few ulp
(numpy's vectorised exp/log are not guaranteed to match libm bit for bit).
"""
import math

import numpy as np

_CF_MAX_ITER = 1000
_CF_EPS = 1e-15
_CF_TINY = 1e-300


def knn_predict(train_x, train_y, query_x, k):
    """Mean target of the ``k`` nearest training rows for every query row.

    Squared Euclidean distance; ties in distance go to the lowest training
    index. Neighbour targets are summed in (distance, index) order.
    """
    train_x = np.ascontiguousarray(train_x, dtype=np.float64)
    train_y = np.ascontiguousarray(train_y, dtype=np.float64)
    query_x = np.ascontiguousarray(query_x, dtype=np.float64)
    n, d = train_x.shape
    m = query_x.shape[0]
    out = np.empty(m, dtype=np.float64)
    for i in range(m):
        dist = np.zeros(n, dtype=np.float64)
        for j in range(d):
            diff = train_x[:, j] - query_x[i, j]
            dist += diff * diff
        order = np.argsort(dist, kind="stable")[:k]
        acc = 0.0
        for idx in order:
            acc += train_y[idx]
        out[i] = acc / k
    return out


def kth_smallest(values, rank):
    """The ``rank``-th smallest entry (1-indexed) of ``values``."""
    values = np.asarray(values, dtype=np.float64)
    return float(np.partition(values, rank - 1)[rank - 1])


def _descending(probs):
    # stable sort on the negated values keeps lower class index first on ties
    return np.argsort(-probs, axis=1, kind="stable")


def aps_scores(probs, labels):
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = _descending(probs)
    cum = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
    pos = np.argmax(order == labels[:, None], axis=1)
    return cum[np.arange(len(labels)), pos]


def aps_sets(probs, qhat, include_crossing=False):
    """Boolean membership matrix of the APS prediction sets at threshold ``qhat``.

    A class is kept while the running mass through it is ``<= qhat``; with
    ``include_crossing`` the first class whose running mass reaches ``qhat``
    is kept as well.
    """
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    n, n_classes = probs.shape
    order = _descending(probs)
    cum = np.cumsum(np.take_along_axis(probs, order, axis=1), axis=1)
    if include_crossing:
        count = np.minimum((cum < qhat).sum(axis=1) + 1, n_classes)
    else:
        count = (cum <= qhat).sum(axis=1)
    keep = np.arange(n_classes)[None, :] < count[:, None]
    mask = np.zeros((n, n_classes), dtype=bool)
    np.put_along_axis(mask, order, keep, axis=1)
    return mask


def _betacf(a, b, x):
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        h = np.where(active, h * (d * c), h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            break
    return h


def betainc(a, b, x):
    """Regularised incomplete beta function I_x(a, b) for an array of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    lo = x <= 0.0
    hi = x >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    xm = x[mid]
    if xm.size:
        lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        front = np.exp(lbeta + a * np.log(xm) + b * np.log1p(-xm))
        direct = xm < (a + 1.0) / (a + b + 2.0)
        res = np.empty_like(xm)
        if direct.any():
            res[direct] = front[direct] * _betacf(a, b, xm[direct]) / a
        if (~direct).any():
            res[~direct] = 1.0 - front[~direct] * _betacf(b, a, 1.0 - xm[~direct]) / b
        out[mid] = res
    return out
