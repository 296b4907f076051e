"""The finite-sample conformal quantile shared by every calibration method."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels

SNAP_TOL = 1e-9


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly between 0 and 1, got {alpha!r}")
    return alpha


def snap(v: float) -> float:
    """Round ``v`` to the nearest integer when it is within 1e-9 of one."""
    r = round(v)
    return float(r) if abs(v - r) < SNAP_TOL else v


def conformal_rank(n_cal: int, alpha: float) -> int:
    """Order-statistic index ``ceil((n_cal + 1) * (1 - alpha))``.

    ``(n_cal + 1) * (1 - alpha)`` is snapped to an integer first when it is
    within 1e-9 of one, so e.g. ``n_cal=9, alpha=0.5`` gives 5 and not 6.
    """
    alpha = _check_alpha(alpha)
    if int(n_cal) < 1:
        raise ValueError(f"n_cal must be at least 1, got {n_cal}")
    return int(math.ceil(snap((int(n_cal) + 1) * (1.0 - alpha))))


@dataclass(frozen=True)
class ConformalQuantile:
    """Calibrated threshold ``q_hat`` and the bookkeeping that produced it.

    When ``rank > n_cal`` the calibration is degenerate and ``q_hat`` is
    ``+inf``: the prediction region is the whole output space.
    """

    q_hat: float
    alpha: float
    n_cal: int
    rank: int

    @property
    def degenerate(self) -> bool:
        return self.rank > self.n_cal

    def to_dict(self) -> dict:
        return {
            "q_hat": None if self.degenerate else self.q_hat,
            "alpha": self.alpha,
            "n_cal": self.n_cal,
            "rank": self.rank,
            "degenerate": self.degenerate,
        }


def conformal_quantile(scores, alpha: float) -> ConformalQuantile:
    """Return the ``conformal_rank``-th smallest score (no interpolation)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("conformal_quantile needs at least one calibration score")
    if not np.all(np.isfinite(s)):
        raise ValueError("calibration scores must be finite")
    rank = conformal_rank(s.size, alpha)
    if rank > s.size:
        return ConformalQuantile(math.inf, float(alpha), int(s.size), rank)
    return ConformalQuantile(kernels.kth_smallest(s, rank), float(alpha), int(s.size), rank)
