import warnings

import numpy as np
import pytest

from icpkit.dataset import CLASSIFICATION, REGRESSION, Dataset, make_synthetic_regression, split
from icpkit.models import (
    knn_fit,
    fit_residual_model,
    pinball_loss,
    pinball_subgradient,
    quantile_fit,
    softmax,
    softmax_fit,
    softmax_loss_grad,
    softmax_predict,
)


def reg(x, y):
    return Dataset(np.asarray(x, float).reshape(len(y), -1), y, REGRESSION)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-8)))


class TestKnn:
    def test_k1_identity(self, backend):
        m = knn_fit(reg([[0.0], [1.0], [5.0]], [3.0, 4.0, 7.0]), k=1)
        assert m.predict([[1.0]]).tolist() == [4.0]

    def test_k_all_is_mean(self, backend):
        y = [1.0, 2.0, 9.0, 4.0]
        m = knn_fit(reg([[0.0], [1.0], [5.0], [7.0]], y), k=4)
        assert np.allclose(m.predict([[-3.0], [2.0], [100.0]]), np.mean(y))

    def test_hand_geometry(self, backend):
        m = knn_fit(reg([[0.0, 0.0], [1.0, 0.0], [10.0, 10.0]], [1.0, 2.0, 9.0]), k=2)
        assert m.predict([[0.4, 0.1]]).tolist() == [1.5]

    def test_tie_takes_lower_index(self, backend):
        m = knn_fit(reg([[-1.0], [1.0]], [10.0, 20.0]), k=1)
        assert m.predict([[0.0]]).tolist() == [10.0]

    def test_vector_query(self, backend):
        m = knn_fit(reg([[0.0], [1.0]], [1.0, 3.0]), k=1)
        assert m.predict(0.9).tolist() == [3.0]

    def test_bad_k(self):
        with pytest.raises(ValueError, match="k must lie"):
            knn_fit(reg([[0.0]], [1.0]), k=2)


class TestResidualModel:
    def test_zero_residuals(self, backend):
        data = reg([[0.0], [1.0], [2.0], [3.0]], [1.0, 3.0, 5.0, 7.0])
        perfect = type("F", (), {"predict": lambda self, x: 2 * np.asarray(x)[:, 0] + 1})()
        r = fit_residual_model(perfect, data, k=2)
        assert np.all(r.predict([[0.5], [9.0]]) == 0.0)

    def test_hand_residual_targets(self, backend):
        f = type("F", (), {"predict": lambda self, x: np.full(len(x), 2.0)})()
        cal1 = reg([[0.0], [1.0], [2.0]], [1.0, 5.0, 2.5])
        r = fit_residual_model(f, cal1, k=1)
        assert r.train_y.tolist() == [1.0, 3.0, 0.5]
        assert r.predict([[1.1]]).tolist() == [3.0]

    def test_tracks_heteroscedastic_scale(self, backend):
        ds = make_synthetic_regression(2000, "heteroscedastic", seed=1)
        tr, c1, _, _ = split(ds, (0.4, 0.2, 0.2, 0.2), 1)
        f = knn_fit(ds.subset(tr), 5)
        r = fit_residual_model(f, ds.subset(c1), 10)
        grid = np.linspace(0, 10, 200)[:, None]
        assert np.corrcoef(r.predict(grid), grid[:, 0])[0, 1] > 0


class TestPinball:
    def test_examples(self):
        assert pinball_loss(3.0, 3.0, 0.3) == 0.0
        assert pinball_loss(1.0, 0.0, 0.9) == pytest.approx(0.9)
        assert pinball_loss(0.0, 1.0, 0.9) == pytest.approx(0.1)
        rng = np.random.default_rng(0)
        y, p = rng.normal(size=50), rng.normal(size=50)
        assert np.allclose(pinball_loss(y, p, 0.5), 0.5 * np.abs(y - p))

    def test_subgradient_matches_finite_difference(self):
        rng = np.random.default_rng(1)
        h = 1e-6
        for eps in (0.05, 0.3, 0.5, 0.95):
            y, p = rng.normal(size=200), rng.normal(size=200)
            fd = (pinball_loss(y, p + h, eps) - pinball_loss(y, p - h, eps)) / (2 * h)
            assert rel_err(pinball_subgradient(y, p, eps), fd) < 1e-5

    def test_objective_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(2)
        z = np.hstack([np.ones((100, 1)), rng.normal(size=(100, 2))])
        y, w, eps, h = rng.normal(size=100), rng.normal(size=3), 0.2, 1e-7

        def obj(v):
            return np.mean(pinball_loss(y, z @ v, eps))

        grad = z.T @ pinball_subgradient(y, z @ w, eps) / len(y)
        fd = [(obj(w + h * e) - obj(w - h * e)) / (2 * h) for e in np.eye(3)]
        assert rel_err(grad, fd) < 1e-5

    def test_subgradient_zero_at_kink(self):
        assert pinball_subgradient(1.0, 1.0, 0.3) == 0.0

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            pinball_loss(1.0, 0.0, 1.0)


class TestQuantileFit:
    @pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
    def test_constant_target(self, eps):
        ds = reg(np.linspace(0, 10, 50), np.full(50, 4.2))
        m = quantile_fit(ds, eps, steps=200)
        assert np.max(np.abs(m.predict(np.linspace(0, 10, 30)) - 4.2)) < 1e-3

    def test_median_line(self):
        ds = make_synthetic_regression(2000, seed=0)
        m = quantile_fit(ds, 0.5)
        b0, b1 = m.predict([[0.0], [1.0]])
        assert abs(b1 - b0 - 2.0) < 0.1 and abs(b0 - 1.0) < 0.1

    def test_quantile_ordering(self):
        ds = make_synthetic_regression(2000, "heteroscedastic", seed=3)
        tr, _, val = split(ds, (0.5, 0.25, 0.25), 3)
        lo = quantile_fit(ds.subset(tr), 0.05)
        hi = quantile_fit(ds.subset(tr), 0.95)
        x = ds.subset(val).features
        assert np.mean(lo.predict(x) <= hi.predict(x)) >= 0.99

    def test_empirical_level(self):
        ds = make_synthetic_regression(2000, seed=4)
        m = quantile_fit(ds, 0.9)
        assert abs(np.mean(ds.targets <= m.predict(ds.features)) - 0.9) < 0.02

    def test_loss_history_non_increasing(self):
        m = quantile_fit(make_synthetic_regression(300, seed=0), 0.3, steps=500)
        assert all(b <= a for a, b in zip(m.loss_history, m.loss_history[1:]))

    def test_zero_variance_feature_warns(self):
        x = np.column_stack([np.linspace(0, 1, 40), np.ones(40)])
        with pytest.warns(UserWarning, match="zero variance"):
            m = quantile_fit(reg(x, np.linspace(0, 1, 40)), 0.5, steps=50)
        assert m.warnings


class TestSoftmax:
    def blobs(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 3, size=120)
        x = rng.normal(size=(120, 2)) + np.array([[0, 0], [3, 0], [0, 3]])[y]
        return Dataset(x, y, CLASSIFICATION, n_classes=3)

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(5)
        z = np.hstack([np.ones((40, 1)), rng.normal(size=(40, 3))])
        labels = rng.integers(0, 4, size=40)
        w = rng.normal(size=(4, 4))
        _, grad = softmax_loss_grad(w, z, labels)
        h = 1e-6
        fd = np.zeros_like(w)
        for i in range(4):
            for j in range(4):
                e = np.zeros_like(w)
                e[i, j] = h
                fd[i, j] = (softmax_loss_grad(w + e, z, labels)[0]
                            - softmax_loss_grad(w - e, z, labels)[0]) / (2 * h)
        assert rel_err(grad, fd) < 1e-5

    def test_zero_steps_uniform(self):
        m = softmax_fit(self.blobs(), steps=0)
        assert np.allclose(softmax_predict(m, [[5.0, -3.0], [0.0, 0.0]]), 1 / 3)

    def test_probabilities_normalised(self):
        m = softmax_fit(self.blobs())
        p = m.predict_proba(np.random.default_rng(1).normal(size=(50, 2)) * 10)
        assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-9)

    def test_loss_decreases(self):
        m = softmax_fit(self.blobs(), steps=100)
        assert m.loss_history[-1] < m.loss_history[0] == pytest.approx(np.log(3))

    def test_minibatch_deterministic(self):
        a = softmax_fit(self.blobs(), steps=20, batch_size=16, seed=3)
        b = softmax_fit(self.blobs(), steps=20, batch_size=16, seed=3)
        assert np.array_equal(a.weights, b.weights)

    def test_softmax_stable(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            p = softmax(np.array([[1000.0, 0.0, -1000.0]]))
        assert p[0].tolist() == [1.0, 0.0, 0.0]

    def test_single_class_rejected(self):
        ds = Dataset([[0.0], [1.0]], [0, 0], CLASSIFICATION, n_classes=2)
        with pytest.raises(ValueError, match="two classes"):
            softmax_fit(ds)
