"""Coverage measurement and validation of the finite-sample coverage law.

Conditional on the calibration set, the coverage of a split-conformal region
is ``Beta(n_cal + 1 - l, l)`` with ``l = floor((n_cal + 1) * alpha)``. This
module evaluates that law, runs the repeated re-calibration experiment
(fresh calibration/validation draws from a fixed pool with the base model
held fixed), and compares the trial coverages to the law with a
Kolmogorov-Smirnov statistic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ._backend import kernels
from .classification import per_class_coverage, set_size_histogram
from .dataset import Dataset, make_rng
from .quantile import snap
from .regression import Intervals

KS_CRIT_5PCT = 1.358
MIN_KS_TRIALS = 20
DISCRETENESS_CAVEAT = (
    "empirical coverage is a multiple of 1/n_val, so the sample is discrete while the "
    "reference law is continuous; critical values and p-values are approximate"
)


# ------------------------------------------------------------------ Beta law


@dataclass(frozen=True)
class BetaParams:
    a: float
    b: float
    l: int
    n_cal: int
    alpha: float

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def var(self) -> float:
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1.0))

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "l": self.l,
            "n_cal": self.n_cal,
            "alpha": self.alpha,
            "mean": self.mean,
        }


def beta_params(n_cal: int, alpha: float) -> BetaParams:
    """Parameters of the coverage law for ``n_cal`` calibration points.

    ``l = floor((n_cal + 1) * alpha)`` after snapping to a nearby integer, so
    the law's mean is ``(n_cal + 1 - l) / (n_cal + 1)``; for 126 points at
    alpha = 0.1 this is 115/127.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly between 0 and 1, got {alpha!r}")
    if int(n_cal) < 1:
        raise ValueError(f"n_cal must be at least 1, got {n_cal}")
    n_cal = int(n_cal)
    l = int(math.floor(snap((n_cal + 1) * alpha)))
    if l < 1:
        raise ValueError(
            f"alpha={alpha} is too small for n_cal={n_cal}: every region is the whole space"
        )
    return BetaParams(float(n_cal + 1 - l), float(l), l, n_cal, alpha)


def _unit_interval(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("beta distribution argument must lie in [0, 1]")
    return arr


def beta_cdf(params: BetaParams, x):
    """Regularised incomplete beta ``I_x(a, b)`` (continued-fraction evaluation)."""
    arr = _unit_interval(x)
    out = kernels.betainc(params.a, params.b, arr.reshape(-1)).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def beta_pdf(params: BetaParams, x):
    arr = _unit_interval(x)
    a, b = params.a, params.b
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    with np.errstate(divide="ignore"):
        left = 0.0 if a == 1.0 else (a - 1.0) * np.log(arr)
        right = 0.0 if b == 1.0 else (b - 1.0) * np.log1p(-arr)
    logp = left + right - lbeta + np.zeros_like(arr)
    out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def beta_ppf(params: BetaParams, u, iterations: int = 64):
    """Inverse of :func:`beta_cdf` by bisection (vectorised over ``u``)."""
    u = _unit_interval(u)
    flat = u.reshape(-1)
    lo = np.zeros_like(flat)
    hi = np.ones_like(flat)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = kernels.betainc(params.a, params.b, mid) < flat
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = (0.5 * (lo + hi)).reshape(u.shape)
    return float(out) if out.ndim == 0 else out


def sample_beta(params: BetaParams, size: int, seed: int) -> np.ndarray:
    """Inverse-CDF draws from the coverage law using PCG64(seed) uniforms."""
    return beta_ppf(params, make_rng(seed).uniform(size=size))


def beta_binomial_cdf(params: BetaParams, n_val: int) -> np.ndarray:
    """CDF of ``covered / n_val`` on the lattice ``0, 1/n_val, ..., 1`` when
    coverage is Beta(a, b) and ``n_val`` points are checked."""
    a, b = params.a, params.b
    ks = np.arange(n_val + 1)
    lb = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    logpmf = np.array(
        [
            math.lgamma(n_val + 1) - math.lgamma(k + 1) - math.lgamma(n_val - k + 1)
            + math.lgamma(k + a) + math.lgamma(n_val - k + b) - math.lgamma(n_val + a + b)
            - lb
            for k in ks
        ]
    )
    return np.minimum(np.cumsum(np.exp(logpmf)), 1.0)


# ------------------------------------------------------------------ coverage


def empirical_coverage(predictions, truths) -> float:
    """Fraction of ``truths`` inside their prediction (endpoints inclusive).

    ``predictions`` may be an :class:`Intervals` batch, a boolean ``(n, K)``
    set-membership mask, or a list of :class:`PredictionInterval` /
    :class:`PredictionSet`.
    """
    truths = np.asarray(truths)
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions but {len(truths)} truths")
    if len(truths) == 0:
        raise ValueError("empirical_coverage needs at least one prediction")
    if isinstance(predictions, Intervals):
        hits = predictions.contains(truths)
    elif isinstance(predictions, np.ndarray) and predictions.dtype == bool:
        hits = predictions[np.arange(len(truths)), truths.astype(np.int64)]
    else:
        hits = np.array([t in p for p, t in zip(predictions, truths)], dtype=bool)
    return float(np.mean(hits))


def _finite_or_none(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_finite_or_none(x) for x in v]
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class CoverageReport:
    """Summary of one validation pass."""

    method: str
    alpha: float
    n_cal: int
    n_val: int
    empirical_coverage: float
    q_hat: float | tuple[float, ...]
    degenerate: bool = False
    mean_width: float | None = None
    width_sd: float | None = None
    width_min: float | None = None
    width_max: float | None = None
    crossing_count: int | None = None
    mean_set_size: float | None = None
    set_size_sd: float | None = None
    set_size_histogram: tuple[int, ...] | None = None
    per_class_coverage: tuple[float, ...] | None = None
    empty_set_rate: float | None = None
    beta: BetaParams | None = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "alpha": self.alpha,
            "n_cal": self.n_cal,
            "n_val": self.n_val,
            "empirical_coverage": self.empirical_coverage,
            "q_hat": _finite_or_none(self.q_hat),
            "degenerate": self.degenerate,
        }
        if self.mean_width is not None:
            out.update(
                mean_width=_finite_or_none(self.mean_width),
                width_sd=_finite_or_none(self.width_sd),
                width_min=_finite_or_none(self.width_min),
                width_max=_finite_or_none(self.width_max),
            )
        if self.crossing_count is not None:
            out["crossing_count"] = self.crossing_count
        if self.mean_set_size is not None:
            out.update(
                mean_set_size=self.mean_set_size,
                set_size_sd=self.set_size_sd,
                set_size_histogram=list(self.set_size_histogram),
                per_class_coverage=_finite_or_none(self.per_class_coverage),
                min_class_coverage=_finite_or_none(np.nanmin(self.per_class_coverage)),
                empty_set_rate=self.empty_set_rate,
            )
        if self.beta is not None:
            out["beta"] = self.beta.to_dict()
        return out


# ------------------------------------------------------------------ trials


class TrialPipeline(Protocol):
    """What :func:`run_trials` needs from a fitted pipeline."""

    n_cal: int
    n_val: int
    alpha: float

    def precompute(self, pool: Dataset): ...

    def trial(self, cache, cal_idx: np.ndarray, val_idx: np.ndarray) -> tuple[float, float]:
        """Return (empirical coverage, expected coverage under the Beta law)."""


@dataclass(frozen=True)
class TrialDistribution:
    """Per-trial empirical coverages and the coverage law they should follow.

    ``expected`` holds each trial's coverage-law mean; it differs between
    trials only for class-balanced calibration, whose per-class sample sizes
    vary from draw to draw.
    """

    coverages: np.ndarray
    beta: BetaParams
    n_val: int
    expected: np.ndarray = field(default=None)

    @property
    def T(self) -> int:
        return len(self.coverages)

    @property
    def mean(self) -> float:
        return float(np.mean(self.coverages))

    @property
    def standard_error(self) -> float:
        if self.T < 2:
            return math.nan
        return float(np.std(self.coverages, ddof=1) / math.sqrt(self.T))


def trial_seed(seed: int, j: int) -> int:
    """Seed for trial ``j`` (1-based): ``seed XOR j``."""
    return (int(seed) ^ int(j)) & 0xFFFFFFFFFFFFFFFF


def trial_partition(pool_size: int, n_cal: int, n_val: int, seed: int, j: int):
    perm = make_rng(trial_seed(seed, j)).permutation(pool_size)
    return perm[:n_cal], perm[n_cal : n_cal + n_val]


def run_trials(pipeline: TrialPipeline, pool: Dataset, T: int, seed: int) -> TrialDistribution:
    """Re-draw calibration/validation sets from ``pool`` ``T`` times.

    Trial ``j`` shuffles the pool with PCG64(seed XOR j), calibrates on the
    first ``n_cal`` rows and measures coverage on the next ``n_val``. The
    base models inside ``pipeline`` are not refitted.
    """
    if T < 1:
        raise ValueError("need at least one trial")
    n_cal, n_val = int(pipeline.n_cal), int(pipeline.n_val)
    if n_cal < 1 or n_val < 1 or n_cal + n_val > len(pool):
        raise ValueError(
            f"pool of {len(pool)} rows is too small for n_cal={n_cal} and n_val={n_val}"
        )
    cache = pipeline.precompute(pool)
    cov = np.empty(T)
    expected = np.empty(T)
    for j in range(1, T + 1):
        cal, val = trial_partition(len(pool), n_cal, n_val, seed, j)
        cov[j - 1], expected[j - 1] = pipeline.trial(cache, cal, val)
    return TrialDistribution(cov, beta_params(n_cal, pipeline.alpha), n_val, expected)


# ------------------------------------------------------------------ KS tests


@dataclass(frozen=True)
class KSResult:
    D: float
    critical_5pct: float
    p_value: float
    T: int
    mode: str
    caveat: str = DISCRETENESS_CAVEAT

    @property
    def passed(self) -> bool:
        return self.D < self.critical_5pct

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "critical_5pct": self.critical_5pct,
            "pass": self.passed,
            "p_value_approx": self.p_value,
            "T": self.T,
            "mode": self.mode,
            "caveat": self.caveat,
        }


def kolmogorov_sf(lam: float) -> float:
    """Asymptotic survival function of the Kolmogorov distribution."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(max(total, 0.0), 1.0)


def _ks_pvalue(D: float, n_eff: float) -> float:
    s = math.sqrt(n_eff)
    return kolmogorov_sf((s + 0.12 + 0.11 / s) * D)


def _coverages(trials) -> np.ndarray:
    c = np.asarray(trials.coverages if isinstance(trials, TrialDistribution) else trials, float)
    if c.size < MIN_KS_TRIALS:
        raise ValueError(f"T too small for KS: need at least {MIN_KS_TRIALS} trials, got {c.size}")
    return c


def ks_statistic(sample, cdf) -> float:
    """One-sample sup distance between the empirical CDF of ``sample`` and ``cdf``."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = x.size
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_statistic_vs_beta(trials, params: BetaParams | None = None) -> KSResult:
    """One-sample KS of trial coverages against the exact Beta CDF."""
    c = _coverages(trials)
    params = params or trials.beta
    D = ks_statistic(c, lambda x: beta_cdf(params, np.clip(x, 0.0, 1.0)))
    return KSResult(D, KS_CRIT_5PCT / math.sqrt(c.size), _ks_pvalue(D, c.size), c.size, "beta")


def ks_two_sample_vs_beta(
    trials, params: BetaParams | None = None, n_draws: int | None = None, seed: int = 0
) -> KSResult:
    """Two-sample KS between trial coverages and simulated Beta draws."""
    c = np.sort(_coverages(trials))
    params = params or trials.beta
    m = int(n_draws or c.size)
    draws = np.sort(sample_beta(params, m, seed))
    grid = np.concatenate([c, draws])
    F1 = np.searchsorted(c, grid, side="right") / c.size
    F2 = np.searchsorted(draws, grid, side="right") / m
    D = float(np.max(np.abs(F1 - F2)))
    n_eff = c.size * m / (c.size + m)
    crit = KS_CRIT_5PCT * math.sqrt((c.size + m) / (c.size * m))
    return KSResult(D, crit, _ks_pvalue(D, n_eff), c.size, "beta-two-sample")


def ks_statistic_vs_beta_binomial(trials, params: BetaParams | None = None,
                                  n_val: int | None = None) -> KSResult:
    """KS of trial coverages against the Beta-Binomial law of ``covered / n_val``.

    This is the exact distribution of the coverage measured on ``n_val``
    validation points. The continuous-law critical value is conservative here.
    """
    c = _coverages(trials)
    params = params or trials.beta
    n_val = int(n_val or trials.n_val)
    cdf = beta_binomial_cdf(params, n_val)
    counts = np.rint(c * n_val).astype(np.int64)
    ecdf = np.cumsum(np.bincount(counts, minlength=n_val + 1)) / c.size
    D = float(np.max(np.abs(ecdf - cdf)))
    return KSResult(
        D, KS_CRIT_5PCT / math.sqrt(c.size), _ks_pvalue(D, c.size), c.size, "beta-binomial",
        caveat="reference law is discrete; the asymptotic critical value is conservative",
    )


# ------------------------------------------------------------------ plot data


def histogram_table(trials: TrialDistribution, bins: int | Sequence[float] | None = None):
    """Rows ``(bin_left, bin_right, count, beta_pdf_at_midpoint)``.

    By default there is one bin per attainable coverage value ``k / n_val``
    between the observed minimum and maximum, centred on the lattice point.
    """
    c = np.asarray(trials.coverages)
    if bins is None:
        n = trials.n_val
        k_lo = int(np.rint(c.min() * n))
        k_hi = int(np.rint(c.max() * n))
        edges = (np.arange(k_lo, k_hi + 2) - 0.5) / n
    elif np.isscalar(bins):
        edges = np.linspace(c.min(), c.max(), int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    counts, edges = np.histogram(c, bins=edges)
    mids = np.clip(0.5 * (edges[:-1] + edges[1:]), 0.0, 1.0)
    pdf = beta_pdf(trials.beta, mids)
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i]), float(pdf[i]))
        for i in range(len(counts))
    ]


def qq_pairs(trials: TrialDistribution, n_levels: int = 99):
    """Rows ``(level, empirical_quantile, beta_quantile)`` at levels ``i / (n_levels + 1)``."""
    levels = np.arange(1, n_levels + 1) / (n_levels + 1)
    emp = np.quantile(np.asarray(trials.coverages), levels, method="inverted_cdf")
    theo = beta_ppf(trials.beta, levels)
    return [(float(p), float(e), float(t)) for p, e, t in zip(levels, emp, theo)]


def build_interval_report(method, calib_quantile, intervals: Intervals, truths,
                          n_cal: int) -> CoverageReport:
    widths = intervals.widths
    q = calib_quantile
    beta = _maybe_beta(n_cal, q.alpha)
    return CoverageReport(
        method=method,
        alpha=q.alpha,
        n_cal=n_cal,
        n_val=len(truths),
        empirical_coverage=empirical_coverage(intervals, truths),
        q_hat=q.q_hat,
        degenerate=q.degenerate,
        mean_width=float(np.mean(widths)),
        width_sd=float(np.std(widths)),
        width_min=float(np.min(widths)),
        width_max=float(np.max(widths)),
        crossing_count=intervals.crossings if method == "cqr" else None,
        beta=beta,
    )


def build_set_report(method, quantiles, mask: np.ndarray, truths, n_cal: int,
                     n_classes: int) -> CoverageReport:
    sizes = mask.sum(axis=1)
    alpha = quantiles[0].alpha
    q_hat = quantiles[0].q_hat if len(quantiles) == 1 else tuple(q.q_hat for q in quantiles)
    return CoverageReport(
        method=method,
        alpha=alpha,
        n_cal=n_cal,
        n_val=len(truths),
        empirical_coverage=empirical_coverage(mask, truths),
        q_hat=q_hat,
        degenerate=any(q.degenerate for q in quantiles),
        mean_set_size=float(np.mean(sizes)),
        set_size_sd=float(np.std(sizes)),
        set_size_histogram=tuple(int(v) for v in set_size_histogram(mask, n_classes)),
        per_class_coverage=tuple(float(v) for v in per_class_coverage(mask, truths, n_classes)),
        empty_set_rate=float(np.mean(sizes == 0)),
        beta=_maybe_beta(n_cal, alpha),
    )


def _maybe_beta(n_cal, alpha):
    try:
        return beta_params(n_cal, alpha)
    except ValueError:
        return None

