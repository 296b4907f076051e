"""Built-in base predictors: KNN regression, linear quantile regression and
multinomial logistic regression.

The conformal layer only relies on ``predict`` (point / quantile models) and
``predict_proba`` (classifiers), so any object with those methods can stand
in for these.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ._backend import kernels
from .dataset import CLASSIFICATION, REGRESSION, Dataset, make_rng


class PointPredictor(Protocol):
    def predict(self, x) -> np.ndarray: ...


class ProbabilisticClassifier(Protocol):
    n_classes: int

    def predict_proba(self, x) -> np.ndarray: ...


def _as_matrix(x, n_features: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[None, :] if x.shape[0] == n_features and n_features > 1 else x[:, None]
    if x.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {x.shape[1]}")
    return x


def _require_task(data: Dataset, task: str) -> None:
    if data.task != task:
        raise ValueError(f"expected a {task} dataset, got {data.task}")


# ---------------------------------------------------------------- KNN


@dataclass(frozen=True)
class KnnRegressor:
    """Unweighted k-nearest-neighbour mean under Euclidean distance.

    Distance ties are resolved in favour of the lowest training index.
    """

    k: int
    train_x: np.ndarray
    train_y: np.ndarray

    def predict(self, x) -> np.ndarray:
        q = _as_matrix(x, self.train_x.shape[1])
        return kernels.knn_predict(self.train_x, self.train_y, q, self.k)

    def to_dict(self) -> dict:
        return {"type": "knn", "k": self.k, "n_train": int(len(self.train_y))}


def _knn(x: np.ndarray, y: np.ndarray, k: int) -> KnnRegressor:
    k = int(k)
    if not 1 <= k <= len(y):
        raise ValueError(f"k must lie in [1, {len(y)}], got {k}")
    x = np.array(x, dtype=np.float64)
    y = np.array(y, dtype=np.float64)
    x.setflags(write=False)
    y.setflags(write=False)
    return KnnRegressor(k, x, y)


def knn_fit(train: Dataset, k: int = 5) -> KnnRegressor:
    _require_task(train, REGRESSION)
    return _knn(train.features, train.targets, k)


def fit_residual_model(f: PointPredictor, cal1: Dataset, k: int = 10) -> KnnRegressor:
    """KNN regressor on the absolute residuals ``|y - f(x)|`` of ``cal1``.

    ``f`` must have been fitted on data disjoint from ``cal1``.
    """
    _require_task(cal1, REGRESSION)
    resid = np.abs(cal1.targets - f.predict(cal1.features))
    return _knn(cal1.features, resid, k)


# ---------------------------------------------------------------- pinball loss


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"quantile level must lie strictly between 0 and 1, got {epsilon!r}")
    return epsilon


def pinball_loss(y, pred, epsilon: float):
    """``max(eps * (y - pred), (eps - 1) * (y - pred))``, elementwise."""
    epsilon = _check_epsilon(epsilon)
    r = np.asarray(y, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    out = np.maximum(epsilon * r, (epsilon - 1.0) * r)
    return float(out) if out.ndim == 0 else out


def pinball_subgradient(y, pred, epsilon: float):
    """Derivative of :func:`pinball_loss` with respect to ``pred``.

    ``-eps`` above the kink, ``1 - eps`` below it, 0 exactly on it.
    """
    epsilon = _check_epsilon(epsilon)
    r = np.asarray(y, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    out = np.where(r > 0, -epsilon, np.where(r < 0, 1.0 - epsilon, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> tuple["Standardizer", list[str]]:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        keep = scale > 0
        notes = [f"feature {j} has zero variance and was dropped" for j in np.flatnonzero(~keep)]
        return cls(mean, np.where(keep, scale, 1.0), keep), notes

    def transform(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / self.scale
        return np.hstack([np.ones((x.shape[0], 1)), z[:, self.keep]])


@dataclass(frozen=True)
class QuantileModel:
    """Affine predictor of the ``epsilon`` conditional quantile.

    ``weights`` act on ``[1, standardized kept features]`` and produce a
    standardized target; ``predict`` undoes both standardizations.
    ``loss_history`` holds the best mean pinball loss seen so far at each
    checkpoint (standardized units), so it never increases.
    """

    epsilon: float
    weights: np.ndarray
    standardizer: Standardizer
    y_mean: float
    y_scale: float
    steps: int
    step_size: float
    loss_history: tuple[float, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    def predict(self, x) -> np.ndarray:
        z = self.standardizer.transform(_as_matrix(x, len(self.standardizer.mean)))
        return self.y_mean + self.y_scale * (z @ self.weights)

    def to_dict(self) -> dict:
        return {
            "type": "linear_quantile",
            "epsilon": self.epsilon,
            "weights": [float(w) for w in self.weights],
            "feature_mean": [float(v) for v in self.standardizer.mean],
            "feature_scale": [float(v) for v in self.standardizer.scale],
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }


def quantile_fit(
    train: Dataset,
    epsilon: float,
    steps: int = 3000,
    step_size: float = 0.5,
    seed: int = 0,
    checkpoint_every: int = 50,
) -> QuantileModel:
    """Fit an affine ``epsilon``-quantile model by subgradient descent.

    Full-batch subgradient steps of size ``step_size / sqrt(t)`` on the mean
    pinball loss, starting from the empirical ``epsilon``-quantile intercept
    with zero slopes, keeping the best iterate. The full-batch fit uses no
    randomness; ``seed`` is accepted so all fitters share one signature.
    """
    _require_task(train, REGRESSION)
    epsilon = _check_epsilon(epsilon)
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    std, notes = Standardizer.fit(train.features)
    for note in notes:
        warnings.warn(note, stacklevel=2)
    z = std.transform(train.features)
    y = train.targets
    y_mean = float(y.mean())
    y_scale = float(y.std()) or 1.0
    ys = (y - y_mean) / y_scale
    n = len(ys)

    w = np.zeros(z.shape[1])
    w[0] = float(np.quantile(ys, epsilon, method="inverted_cdf"))

    def loss(weights):
        return float(np.mean(pinball_loss(ys, z @ weights, epsilon)))

    best_w, best_loss = w.copy(), loss(w)
    history = [best_loss]
    for t in range(1, steps + 1):
        g = pinball_subgradient(ys, z @ w, epsilon)
        w = w - (step_size / np.sqrt(t)) * (z.T @ g) / n
        cur = loss(w)
        if cur < best_loss:
            best_w, best_loss = w.copy(), cur
        if t % checkpoint_every == 0 or t == steps:
            history.append(best_loss)
    best_w.setflags(write=False)
    return QuantileModel(
        epsilon, best_w, std, y_mean, y_scale, int(steps), float(step_size),
        tuple(history), tuple(notes),
    )


# ---------------------------------------------------------------- softmax


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_loss_grad(weights: np.ndarray, z: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient for a ``K x (D+1)`` weight matrix.

    ``z`` already carries the leading column of ones.
    """
    n = z.shape[0]
    logits = z @ weights.T
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(n), labels]))
    p = softmax(logits)
    p[np.arange(n), labels] -= 1.0
    return loss, p.T @ z / n


@dataclass(frozen=True)
class SoftmaxClassifier:
    """Multinomial logistic regression on standardized features."""

    weights: np.ndarray
    n_classes: int
    standardizer: Standardizer
    loss_history: tuple[float, ...] = ()

    def predict_proba(self, x) -> np.ndarray:
        z = self.standardizer.transform(_as_matrix(x, len(self.standardizer.mean)))
        return softmax(z @ self.weights.T)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def to_dict(self) -> dict:
        return {
            "type": "softmax",
            "n_classes": self.n_classes,
            "weights": self.weights.tolist(),
            "feature_mean": self.standardizer.mean.tolist(),
            "feature_scale": self.standardizer.scale.tolist(),
        }


def softmax_fit(
    train: Dataset,
    steps: int = 300,
    step_size: float = 1.0,
    seed: int = 0,
    batch_size: int | None = None,
) -> SoftmaxClassifier:
    """Gradient descent on mean cross-entropy from zero weights.

    Full batch by default; with ``batch_size`` each step uses the next slice
    of a PCG64(seed) shuffle of the rows (reshuffled every epoch).
    """
    _require_task(train, CLASSIFICATION)
    labels = train.targets
    if np.unique(labels).size < 2:
        raise ValueError("softmax_fit needs training data from at least two classes")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    std, notes = Standardizer.fit(train.features)
    for note in notes:
        warnings.warn(note, stacklevel=2)
    z = std.transform(train.features)
    k = train.n_classes
    w = np.zeros((k, z.shape[1]))
    rng = make_rng(seed)
    n = z.shape[0]
    perm, cursor = rng.permutation(n), 0
    history = []
    for _ in range(steps):
        if batch_size is None or batch_size >= n:
            idx = slice(None)
        else:
            if cursor + batch_size > n:
                perm, cursor = rng.permutation(n), 0
            idx = perm[cursor : cursor + batch_size]
            cursor += batch_size
        loss, grad = softmax_loss_grad(w, z[idx], labels[idx])
        history.append(loss)
        w = w - step_size * grad
    w.setflags(write=False)
    return SoftmaxClassifier(w, int(k), std, tuple(history))


def softmax_predict(model: SoftmaxClassifier, x) -> np.ndarray:
    return model.predict_proba(x)
