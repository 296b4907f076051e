"""Split-conformal classification: naive softmax, class-balanced and
adaptive prediction sets (APS).

Batch operations work on an ``(n, K)`` probability matrix and return boolean
membership masks of the same shape; the ``predict_set_*`` helpers wrap a
single probability vector into a :class:`PredictionSet`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .quantile import ConformalQuantile, conformal_quantile

NAIVE = "naive"
CLASS_BALANCED = "class_balanced"
APS = "aps"


@dataclass(frozen=True)
class PredictionSet:
    classes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(sorted(int(c) for c in self.classes)))

    def __contains__(self, y) -> bool:
        return int(y) in self.classes

    def __len__(self) -> int:
        return len(self.classes)

    @classmethod
    def from_mask(cls, row) -> "PredictionSet":
        return cls(tuple(np.flatnonzero(row)))


@dataclass(frozen=True)
class ClassificationCalibration:
    """``quantiles`` has one entry for naive/APS and ``n_classes`` for class-balanced."""

    method: str
    quantiles: tuple[ConformalQuantile, ...]
    n_classes: int
    include_crossing: bool = False

    @property
    def quantile(self) -> ConformalQuantile:
        if self.method == CLASS_BALANCED:
            raise AttributeError("class-balanced calibration has per-class quantiles")
        return self.quantiles[0]

    @property
    def q_hat(self):
        if self.method == CLASS_BALANCED:
            return np.array([q.q_hat for q in self.quantiles])
        return self.quantiles[0].q_hat


def _probs_matrix(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    return p[None, :] if p.ndim == 1 else p


def _check_labels(probs: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape[0] != probs.shape[0]:
        raise ValueError(f"{probs.shape[0]} probability rows but {labels.shape[0]} labels")
    if labels.size == 0:
        raise ValueError("calibration set is empty")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise IndexError(f"class index outside [0, {probs.shape[1] - 1}]")
    return labels


# ------------------------------------------------------------- scores


def naive_scores(probs, labels) -> np.ndarray:
    p = _probs_matrix(probs)
    labels = _check_labels(p, labels)
    return 1.0 - p[np.arange(len(labels)), labels]


def aps_scores(probs, labels) -> np.ndarray:
    """Probability mass of all classes ranked at or above the true class.

    Ranking is by descending probability with ties going to the lower class
    index first.
    """
    p = _probs_matrix(probs)
    labels = _check_labels(p, labels)
    return kernels.aps_scores(p, labels)


def score_softmax_naive(probs, true_class: int) -> float:
    return float(naive_scores(probs, [true_class])[0])


def score_aps(probs, true_class: int) -> float:
    return float(aps_scores(probs, [true_class])[0])


# ------------------------------------------------------------- set builders


def naive_sets(probs, q_hat: float) -> np.ndarray:
    p = _probs_matrix(probs)
    if math.isinf(q_hat):
        return np.ones(p.shape, dtype=bool)
    return p >= 1.0 - q_hat


def class_balanced_sets(probs, q_hats) -> np.ndarray:
    p = _probs_matrix(probs)
    q = np.asarray(q_hats, dtype=np.float64)
    if q.shape != (p.shape[1],):
        raise ValueError(f"need {p.shape[1]} per-class thresholds, got {q.shape}")
    return p >= 1.0 - q[None, :]


def aps_sets(probs, q_hat: float, include_crossing: bool = False) -> np.ndarray:
    """Classes in descending probability order while the running mass stays
    within ``q_hat``.

    By default this is exactly ``{y : aps score of y <= q_hat}``, the set
    whose coverage the conformal guarantee describes; it is empty when the
    top probability alone exceeds ``q_hat``. With ``include_crossing=True``
    the class whose running mass first reaches ``q_hat`` is added too, which
    never yields an empty set but over-covers (often by several points).
    """
    return kernels.aps_sets(_probs_matrix(probs), float(q_hat), bool(include_crossing))


# ------------------------------------------------------------- calibrate / predict


def calibrate_naive_cls(cal_probs, cal_labels, alpha: float) -> ClassificationCalibration:
    p = _probs_matrix(cal_probs)
    q = conformal_quantile(naive_scores(p, cal_labels), alpha)
    return ClassificationCalibration(NAIVE, (q,), p.shape[1])


def calibrate_aps(
    cal_probs, cal_labels, alpha: float, include_crossing: bool = False
) -> ClassificationCalibration:
    """``include_crossing`` selects the set rule used later (see :func:`aps_sets`)."""
    p = _probs_matrix(cal_probs)
    q = conformal_quantile(aps_scores(p, cal_labels), alpha)
    return ClassificationCalibration(APS, (q,), p.shape[1], include_crossing)


def calibrate_class_balanced(cal_probs, cal_labels, alpha: float) -> ClassificationCalibration:
    """One conformal quantile per class, from that class's calibration scores only."""
    p = _probs_matrix(cal_probs)
    labels = _check_labels(p, cal_labels)
    scores = 1.0 - p[np.arange(len(labels)), labels]
    k = p.shape[1]
    missing = [c for c in range(k) if not np.any(labels == c)]
    if missing:
        raise ValueError(f"classes absent from the calibration set: {missing}")
    qs = tuple(conformal_quantile(scores[labels == c], alpha) for c in range(k))
    return ClassificationCalibration(CLASS_BALANCED, qs, k)


def predict_sets(calib: ClassificationCalibration, probs) -> np.ndarray:
    p = _probs_matrix(probs)
    if p.shape[1] != calib.n_classes:
        raise ValueError(f"expected {calib.n_classes} class probabilities, got {p.shape[1]}")
    if calib.method == NAIVE:
        return naive_sets(p, calib.q_hat)
    if calib.method == CLASS_BALANCED:
        return class_balanced_sets(p, calib.q_hat)
    if calib.method == APS:
        return aps_sets(p, calib.q_hat, calib.include_crossing)
    raise ValueError(f"unknown classification method {calib.method!r}")


def _single(calib, method, probs) -> PredictionSet:
    if calib.method != method:
        raise ValueError(f"calibration is for {calib.method!r}, not {method!r}")
    return PredictionSet.from_mask(predict_sets(calib, probs)[0])


def predict_set_naive(calib: ClassificationCalibration, probs) -> PredictionSet:
    return _single(calib, NAIVE, probs)


def predict_set_class_balanced(calib: ClassificationCalibration, probs) -> PredictionSet:
    return _single(calib, CLASS_BALANCED, probs)


def predict_set_aps(calib: ClassificationCalibration, probs) -> PredictionSet:
    return _single(calib, APS, probs)


def masks_to_sets(mask) -> list[PredictionSet]:
    return [PredictionSet.from_mask(row) for row in np.asarray(mask, dtype=bool)]


# ------------------------------------------------------------- summaries


def _as_mask(sets, n_classes: int) -> np.ndarray:
    if isinstance(sets, np.ndarray) and sets.dtype == bool:
        return sets
    mask = np.zeros((len(sets), n_classes), dtype=bool)
    for i, s in enumerate(sets):
        mask[i, list(s.classes)] = True
    return mask


def set_size_histogram(sets, n_classes: int) -> np.ndarray:
    """Counts of prediction sets of size ``0..n_classes``."""
    mask = _as_mask(sets, n_classes)
    if mask.shape[0] == 0:
        raise ValueError("no prediction sets given")
    return np.bincount(mask.sum(axis=1), minlength=n_classes + 1)


def per_class_coverage(sets, labels, n_classes: int) -> np.ndarray:
    """Fraction of each class's points whose set contains the label (NaN if absent)."""
    mask = _as_mask(sets, n_classes)
    labels = np.asarray(labels, dtype=np.int64)
    if mask.shape[0] != labels.shape[0]:
        raise ValueError(f"{mask.shape[0]} sets but {labels.shape[0]} labels")
    if labels.size == 0:
        raise ValueError("no prediction sets given")
    hit = mask[np.arange(len(labels)), labels]
    out = np.full(n_classes, np.nan)
    for c in range(n_classes):
        sel = labels == c
        if sel.any():
            out[c] = hit[sel].mean()
    return out
