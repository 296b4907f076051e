"""Both kernel backends against plain-Python oracles and against each other."""
import math

import numpy as np
import pytest
from scipy import special

from icpkit import _backend

KERNELS = [m for m in _backend.available.values() if m is not None]
IDS = [n for n, m in _backend.available.items() if m is not None]


def knn_oracle(train_x, train_y, q, k):
    d = [(sum((a - b) ** 2 for a, b in zip(row, q)), i) for i, row in enumerate(train_x)]
    d.sort()
    total = 0.0
    for _, i in d[:k]:
        total += train_y[i]
    return total / k


def aps_score_oracle(p, y):
    order = sorted(range(len(p)), key=lambda c: (-p[c], c))
    total = 0.0
    for c in order:
        total += p[c]
        if c == y:
            return total


def aps_set_oracle(p, q, crossing):
    order = sorted(range(len(p)), key=lambda c: (-p[c], c))
    out, total = [], 0.0
    for c in order:
        total += p[c]
        if total <= q:
            out.append(c)
        else:
            if crossing:
                out.append(c)
            break
    return sorted(out)


@pytest.mark.parametrize("kern", KERNELS, ids=IDS)
def test_knn_matches_oracle(kern):
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, d = rng.integers(1, 30), rng.integers(1, 4)
        x = rng.integers(0, 4, size=(n, d)).astype(float)  # many distance ties
        y = rng.normal(size=n)
        q = rng.integers(0, 4, size=(7, d)).astype(float)
        k = int(rng.integers(1, n + 1))
        got = kern.knn_predict(x, y, q, k)
        want = [knn_oracle(x.tolist(), y.tolist(), row.tolist(), k) for row in q]
        assert got.tolist() == want


@pytest.mark.parametrize("kern", KERNELS, ids=IDS)
def test_kth_smallest_matches_sort(kern):
    rng = np.random.default_rng(2)
    for _ in range(200):
        v = rng.integers(0, 10, size=rng.integers(1, 40)).astype(float)
        r = int(rng.integers(1, v.size + 1))
        assert kern.kth_smallest(v, r) == sorted(v)[r - 1]


@pytest.mark.parametrize("kern", KERNELS, ids=IDS)
def test_aps_kernels_match_oracle(kern):
    rng = np.random.default_rng(3)
    for _ in range(50):
        k = int(rng.integers(2, 7))
        p = rng.dirichlet(np.ones(k), size=9)
        p[0] = 1.0 / k  # all ties
        labels = rng.integers(0, k, size=9)
        assert kern.aps_scores(p, labels).tolist() == [
            aps_score_oracle(row.tolist(), int(y)) for row, y in zip(p, labels)
        ]
        q = float(rng.uniform())
        for crossing in (False, True):
            mask = kern.aps_sets(p, q, crossing)
            assert [np.flatnonzero(r).tolist() for r in mask] == [
                aps_set_oracle(row.tolist(), q, crossing) for row in p
            ]


@pytest.mark.parametrize("kern", KERNELS, ids=IDS)
@pytest.mark.parametrize("a,b", [(1, 1), (2, 2), (0.5, 3), (9, 1), (115, 12), (450, 51), (3.3, 70)])
def test_betainc_matches_scipy(kern, a, b):
    x = np.linspace(0.0, 1.0, 401)
    np.testing.assert_allclose(kern.betainc(a, b, x), special.betainc(a, b, x),
                               rtol=1e-11, atol=1e-13)


@pytest.mark.skipif(len(KERNELS) < 2, reason="compiled backend not built")
def test_backends_bit_identical():
    py, cy = _backend.python_kernels, _backend.compiled_kernels
    rng = np.random.default_rng(4)
    x, y, q = rng.normal(size=(200, 3)), rng.normal(size=200), rng.normal(size=(50, 3))
    assert np.array_equal(py.knn_predict(x, y, q, 7), cy.knn_predict(x, y, q, 7))
    p = rng.dirichlet(np.ones(5), size=300)
    labels = rng.integers(0, 5, size=300)
    assert np.array_equal(py.aps_scores(p, labels), cy.aps_scores(p, labels))
    for crossing in (False, True):
        assert np.array_equal(py.aps_sets(p, 0.8, crossing), cy.aps_sets(p, 0.8, crossing))
    # exp/log come from different libraries, so only near-equality holds here
    grid = np.linspace(0, 1, 1001)
    np.testing.assert_allclose(py.betainc(115.0, 12.0, grid), cy.betainc(115.0, 12.0, grid),
                               rtol=1e-12, atol=1e-14)


def test_backend_selection():
    assert _backend.BACKEND in ("python", "cython")
    assert _backend.kernels is _backend.available[_backend.BACKEND]
    assert math.isclose(_backend.kernels.betainc(2.0, 2.0, np.array([0.25]))[0], 0.15625)
