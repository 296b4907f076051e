"""Split-conformal regression: absolute-residual (naive), normalized-residual
(CRF) and conformalized quantile regression (CQR).

Each method has an array-level score function, a calibrator that turns a
calibration set into a :class:`RegressionCalibration`, and an interval
constructor. Callers are responsible for fitting the base models on data
disjoint from the calibration set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .dataset import REGRESSION, Dataset
from .models import PointPredictor
from .quantile import ConformalQuantile, conformal_quantile

R_FLOOR = 1e-6

NAIVE = "naive"
CRF = "crf"
CQR = "cqr"


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, y) -> bool:
        return self.lower <= y <= self.upper


@dataclass(frozen=True)
class Intervals:
    """A batch of intervals; ``crossings`` counts CQR bands that collapsed.

    Symmetric constructions keep their ``half_width`` so that widths are
    reported as ``2 * half_width`` exactly, not as a difference of rounded
    endpoints.
    """

    lower: np.ndarray
    upper: np.ndarray
    crossings: int = 0
    half_width: np.ndarray | None = None

    def __len__(self):
        return len(self.lower)

    def __getitem__(self, i) -> PredictionInterval:
        return PredictionInterval(float(self.lower[i]), float(self.upper[i]))

    @property
    def widths(self) -> np.ndarray:
        if self.half_width is not None:
            return 2.0 * self.half_width
        return self.upper - self.lower

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return (self.lower <= y) & (y <= self.upper)


@dataclass(frozen=True)
class RegressionCalibration:
    method: str
    quantile: ConformalQuantile
    predictors: tuple[Any, ...]

    @property
    def q_hat(self) -> float:
        return self.quantile.q_hat

    @property
    def alpha(self) -> float:
        return self.quantile.alpha


def _check_cal(cal: Dataset) -> None:
    if cal.task != REGRESSION:
        raise ValueError(f"expected a regression calibration set, got {cal.task}")
    if len(cal) == 0:
        raise ValueError("calibration set is empty")


# ------------------------------------------------------------- scores


def absolute_scores(pred, y) -> np.ndarray:
    return np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(y, dtype=np.float64))


def normalized_scores(pred, resid_pred, y) -> np.ndarray:
    denom = np.maximum(np.asarray(resid_pred, dtype=np.float64), R_FLOOR)
    return absolute_scores(pred, y) / denom


def cqr_scores(lo_pred, hi_pred, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return np.maximum(np.asarray(lo_pred) - y, y - np.asarray(hi_pred))


def score_absolute(f: PointPredictor, x, y) -> float:
    return float(absolute_scores(f.predict(x), y)[0])


def score_normalized(f: PointPredictor, r: PointPredictor, x, y) -> float:
    return float(normalized_scores(f.predict(x), r.predict(x), y)[0])


def score_cqr(t_lo: PointPredictor, t_hi: PointPredictor, x, y) -> float:
    return float(cqr_scores(t_lo.predict(x), t_hi.predict(x), y)[0])


# ------------------------------------------------------------- interval builders


def _whole_line(like: np.ndarray) -> Intervals:
    return Intervals(np.full_like(like, -np.inf), np.full_like(like, np.inf))


def naive_intervals(pred, q_hat: float) -> Intervals:
    pred = np.asarray(pred, dtype=np.float64)
    if math.isinf(q_hat):
        return _whole_line(pred)
    half = np.full_like(pred, q_hat)
    return Intervals(pred - half, pred + half, half_width=half)


def crf_intervals(pred, resid_pred, q_hat: float) -> Intervals:
    pred = np.asarray(pred, dtype=np.float64)
    if math.isinf(q_hat):
        return _whole_line(pred)
    half = q_hat * np.maximum(np.asarray(resid_pred, dtype=np.float64), R_FLOOR)
    return Intervals(pred - half, pred + half, half_width=half)


def cqr_intervals(lo_pred, hi_pred, q_hat: float) -> Intervals:
    """Shift both quantile endpoints outward by ``q_hat``.

    Where the shifted lower endpoint exceeds the upper one the interval
    collapses to their midpoint; the number of such points is reported.
    """
    lo = np.asarray(lo_pred, dtype=np.float64)
    hi = np.asarray(hi_pred, dtype=np.float64)
    if math.isinf(q_hat):
        return _whole_line(lo)
    lower = lo - q_hat
    upper = hi + q_hat
    crossed = lower > upper
    if crossed.any():
        mid = 0.5 * (lower + upper)
        lower = np.where(crossed, mid, lower)
        upper = np.where(crossed, mid, upper)
    return Intervals(lower, upper, int(crossed.sum()))


# ------------------------------------------------------------- calibrate / predict


def calibrate_naive(f: PointPredictor, cal: Dataset, alpha: float) -> RegressionCalibration:
    _check_cal(cal)
    q = conformal_quantile(absolute_scores(f.predict(cal.features), cal.targets), alpha)
    return RegressionCalibration(NAIVE, q, (f,))


def calibrate_crf(
    f: PointPredictor, r: PointPredictor, cal2: Dataset, alpha: float
) -> RegressionCalibration:
    """``cal2`` must be disjoint from the data used to fit ``f`` and ``r``."""
    _check_cal(cal2)
    x = cal2.features
    q = conformal_quantile(normalized_scores(f.predict(x), r.predict(x), cal2.targets), alpha)
    return RegressionCalibration(CRF, q, (f, r))


def calibrate_cqr(
    t_lo: PointPredictor, t_hi: PointPredictor, cal: Dataset, alpha: float
) -> RegressionCalibration:
    _check_cal(cal)
    x = cal.features
    q = conformal_quantile(cqr_scores(t_lo.predict(x), t_hi.predict(x), cal.targets), alpha)
    return RegressionCalibration(CQR, q, (t_lo, t_hi))


def predict_intervals(calib: RegressionCalibration, x) -> Intervals:
    """Intervals for every row of ``x`` under any of the three methods."""
    if calib.method == NAIVE:
        (f,) = calib.predictors
        return naive_intervals(f.predict(x), calib.q_hat)
    if calib.method == CRF:
        f, r = calib.predictors
        return crf_intervals(f.predict(x), r.predict(x), calib.q_hat)
    if calib.method == CQR:
        t_lo, t_hi = calib.predictors
        return cqr_intervals(t_lo.predict(x), t_hi.predict(x), calib.q_hat)
    raise ValueError(f"unknown regression method {calib.method!r}")


def _single(calib, method, x) -> PredictionInterval:
    if calib.method != method:
        raise ValueError(f"calibration is for {calib.method!r}, not {method!r}")
    return predict_intervals(calib, x)[0]


def predict_interval_naive(calib: RegressionCalibration, x) -> PredictionInterval:
    return _single(calib, NAIVE, x)


def predict_interval_crf(calib: RegressionCalibration, x) -> PredictionInterval:
    return _single(calib, CRF, x)


def predict_interval_cqr(calib: RegressionCalibration, x) -> PredictionInterval:
    return _single(calib, CQR, x)
