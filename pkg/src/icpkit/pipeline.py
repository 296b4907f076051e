"""End-to-end pipelines: configuration, data, split, base-model fitting,
calibration and evaluation for the six conformal methods.

The split decides which rows train which model. Three-part splits are
``(train, cal, val)``. CRF uses ``(train, cal1, cal2, val)``: ``f`` is fitted
on train, the residual model on cal1, and calibration uses cal2.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classification as cls
from . import regression as reg
from .dataset import (
    CLASSIFICATION,
    REGRESSION,
    DataError,
    Dataset,
    load_csv,
    make_synthetic_classification,
    make_synthetic_regression,
    split,
)
from .diagnostics import (
    CoverageReport,
    TrialDistribution,
    build_interval_report,
    build_set_report,
    run_trials,
)
from .models import fit_residual_model, knn_fit, quantile_fit, softmax_fit
from .quantile import conformal_quantile

# method name -> (task, number of split parts)
METHODS = {
    "naive-reg": (REGRESSION, 3),
    "crf": (REGRESSION, 4),
    "cqr": (REGRESSION, 3),
    "naive-cls": (CLASSIFICATION, 3),
    "class-balanced": (CLASSIFICATION, 3),
    "aps": (CLASSIFICATION, 3),
}
PART_NAMES = {3: ("train", "cal", "val"), 4: ("train", "cal1", "cal2", "val")}
DEFAULT_FRACTIONS = {3: (0.5, 0.25, 0.25), 4: (0.4, 0.2, 0.2, 0.2)}
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    knn_k: int = 5
    residual_k: int = 10
    qr_steps: int = 3000
    qr_step_size: float = 0.5
    softmax_steps: int = 300
    softmax_step_size: float = 1.0


@dataclass(frozen=True)
class PipelineConfig:
    """One reproducible run. ``data`` is ``{"csv": path, "target": name}`` or
    ``{"synthetic": {...generator arguments...}}``; when omitted a synthetic
    dataset matching the method's task is used."""

    method: str = "naive-reg"
    alpha: float = 0.1
    fractions: tuple[float, ...] | None = None
    seed: int = 0
    data: dict | None = None
    model: ModelParams = field(default_factory=ModelParams)
    out: str = "out"
    aps_include_crossing: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigError(f"alpha must lie strictly between 0 and 1, got {self.alpha}")
        n_parts = METHODS[self.method][1]
        if self.fractions is None:
            return self._set_model()
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != n_parts:
            names = PART_NAMES[n_parts]
            if n_parts == 4 and len(fr) == 3:
                detail = "the cal2 part is missing"
            else:
                detail = f"expected parts {', '.join(names)}"
            raise ConfigError(
                f"method {self.method} needs {n_parts} split fractions "
                f"({', '.join(names)}), got {len(fr)}: {detail}"
            )
        object.__setattr__(self, "fractions", fr)
        self._set_model()

    def _set_model(self):
        if isinstance(self.model, dict):
            try:
                object.__setattr__(self, "model", ModelParams(**self.model))
            except TypeError as exc:
                raise ConfigError(f"bad model parameters: {exc}") from None

    @property
    def task(self) -> str:
        return METHODS[self.method][0]

    @property
    def split_fractions(self) -> tuple[float, ...]:
        """The configured fractions, or the method's default split."""
        return self.fractions or DEFAULT_FRACTIONS[METHODS[self.method][1]]

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if d.get("fractions") is not None:
            d["fractions"] = tuple(d["fractions"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def with_overrides(self, **kw) -> "PipelineConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.split_fractions)
        return d


def default_synthetic(task: str, seed: int) -> dict:
    if task == REGRESSION:
        return {"kind": "regression", "n": 2000, "noise": "homoscedastic", "sigma": 1.0,
                "seed": seed}
    return {"kind": "classification", "n": 5000, "n_classes": 5, "seed": seed}


def make_synthetic(spec: dict) -> Dataset:
    spec = dict(spec)
    kind = spec.pop("kind", "regression")
    try:
        if kind == "regression":
            return make_synthetic_regression(**spec)
        if kind == "classification":
            return make_synthetic_classification(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad synthetic data spec: {exc}") from None
    raise ConfigError(f"unknown synthetic kind {kind!r}")


def load_data(config: PipelineConfig) -> Dataset:
    data = config.data or {"synthetic": default_synthetic(config.task, config.seed)}
    if "csv" in data:
        ds = load_csv(data["csv"], data.get("target", "y"), config.task)
    elif "synthetic" in data:
        ds = make_synthetic(data["synthetic"])
    else:
        raise ConfigError("data must contain either 'csv' or 'synthetic'")
    if ds.task != config.task:
        raise ConfigError(f"method {config.method} needs {config.task} data, got {ds.task}")
    return ds


@dataclass
class FittedPipeline:
    """Base models fitted for one method, plus the calibration/validation pool.

    ``pool`` stacks the calibration rows followed by the validation rows of
    the original split; ``pool_index`` maps pool rows back to dataset rows.
    """

    config: PipelineConfig
    models: dict
    pool: Dataset
    pool_index: np.ndarray
    n_cal: int
    n_val: int
    n_classes: int | None = None

    @property
    def method(self) -> str:
        return self.config.method

    @property
    def alpha(self) -> float:
        return float(self.config.alpha)

    # --------------------------------------------------------- precompute / trial

    def precompute(self, data: Dataset) -> dict:
        x = data.features
        m = self.models
        if self.method == "naive-reg":
            return {"y": data.targets, "pred": m["f"].predict(x)}
        if self.method == "crf":
            return {"y": data.targets, "pred": m["f"].predict(x), "rpred": m["r"].predict(x)}
        if self.method == "cqr":
            return {"y": data.targets, "lo": m["t_lo"].predict(x), "hi": m["t_hi"].predict(x)}
        return {"y": data.targets, "probs": m["clf"].predict_proba(x)}

    def calibrate(self, cache: dict, cal: np.ndarray):
        y = cache["y"][cal]
        a = self.alpha
        if self.method == "naive-reg":
            return (conformal_quantile(reg.absolute_scores(cache["pred"][cal], y), a),)
        if self.method == "crf":
            s = reg.normalized_scores(cache["pred"][cal], cache["rpred"][cal], y)
            return (conformal_quantile(s, a),)
        if self.method == "cqr":
            return (conformal_quantile(reg.cqr_scores(cache["lo"][cal], cache["hi"][cal], y), a),)
        p = cache["probs"][cal]
        if self.method == "naive-cls":
            return cls.calibrate_naive_cls(p, y, a).quantiles
        if self.method == "aps":
            return cls.calibrate_aps(p, y, a).quantiles
        return cls.calibrate_class_balanced(p, y, a).quantiles

    def predict(self, cache: dict, quantiles, idx: np.ndarray):
        q = quantiles[0].q_hat
        if self.method == "naive-reg":
            return reg.naive_intervals(cache["pred"][idx], q)
        if self.method == "crf":
            return reg.crf_intervals(cache["pred"][idx], cache["rpred"][idx], q)
        if self.method == "cqr":
            return reg.cqr_intervals(cache["lo"][idx], cache["hi"][idx], q)
        p = cache["probs"][idx]
        if self.method == "naive-cls":
            return cls.naive_sets(p, q)
        if self.method == "aps":
            return cls.aps_sets(p, q, self.config.aps_include_crossing)
        return cls.class_balanced_sets(p, [qq.q_hat for qq in quantiles])

    def covered(self, cache: dict, prediction, idx: np.ndarray) -> np.ndarray:
        y = cache["y"][idx]
        if isinstance(prediction, reg.Intervals):
            return prediction.contains(y)
        return prediction[np.arange(len(idx)), y]

    def expected_coverage(self, cache: dict, quantiles, cal, val) -> float:
        """Mean of the coverage law implied by this calibration."""
        if self.method != "class-balanced":
            q = quantiles[0]
            return min(q.rank, q.n_cal + 1) / (q.n_cal + 1)
        yv = cache["y"][val]
        return float(sum(
            np.mean(yv == c) * min(q.rank, q.n_cal + 1) / (q.n_cal + 1)
            for c, q in enumerate(quantiles)
        ))

    def trial(self, cache: dict, cal: np.ndarray, val: np.ndarray) -> tuple[float, float]:
        quantiles = self.calibrate(cache, cal)
        pred = self.predict(cache, quantiles, val)
        cov = float(np.mean(self.covered(cache, pred, val)))
        return cov, self.expected_coverage(cache, quantiles, cal, val)

    # --------------------------------------------------------- single run

    def evaluate(self, cache: dict | None = None):
        """Calibrate on the split's calibration rows, predict on its validation rows.

        Returns the :class:`CoverageReport` and per-point prediction rows.
        """
        cache = cache if cache is not None else self.precompute(self.pool)
        cal = np.arange(self.n_cal)
        val = np.arange(self.n_cal, self.n_cal + self.n_val)
        quantiles = self.calibrate(cache, cal)
        pred = self.predict(cache, quantiles, val)
        hits = self.covered(cache, pred, val)
        truths = cache["y"][val]
        rows = []
        if isinstance(pred, reg.Intervals):
            report = build_interval_report(
                self.method, quantiles[0], pred, truths, self.n_cal
            )
            for i, v in enumerate(val):
                rows.append((int(self.pool_index[v]), float(pred.lower[i]), float(pred.upper[i]),
                             float(truths[i]), bool(hits[i])))
        else:
            report = build_set_report(
                self.method, quantiles, pred, truths, self.n_cal, self.n_classes
            )
            for i, v in enumerate(val):
                members = " ".join(str(c) for c in np.flatnonzero(pred[i]))
                rows.append((int(self.pool_index[v]), members, int(truths[i]), bool(hits[i])))
        return report, rows

    def trials(self, T: int, seed: int | None = None) -> TrialDistribution:
        return run_trials(self, self.pool, T, self.config.seed if seed is None else seed)


def fit_pipeline(config: PipelineConfig, data: Dataset | None = None) -> FittedPipeline:
    """Split the data with the config seed and fit the method's base models."""
    data = data if data is not None else load_data(config)
    try:
        parts = split(data, config.split_fractions, config.seed)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    mp = config.model
    train = data.subset(parts[0])
    models: dict = {}
    if config.method == "naive-reg":
        models["f"] = knn_fit(train, mp.knn_k)
    elif config.method == "crf":
        models["f"] = knn_fit(train, mp.knn_k)
        models["r"] = fit_residual_model(models["f"], data.subset(parts[1]), mp.residual_k)
    elif config.method == "cqr":
        a = float(config.alpha)
        models["t_lo"] = quantile_fit(train, a / 2, mp.qr_steps, mp.qr_step_size, config.seed)
        models["t_hi"] = quantile_fit(train, 1 - a / 2, mp.qr_steps, mp.qr_step_size, config.seed)
    else:
        models["clf"] = softmax_fit(train, mp.softmax_steps, mp.softmax_step_size, config.seed)
    cal_part, val_part = parts[-2], parts[-1]
    pool_index = np.concatenate([cal_part, val_part])
    return FittedPipeline(
        config=config,
        models=models,
        pool=data.subset(pool_index),
        pool_index=pool_index,
        n_cal=len(cal_part),
        n_val=len(val_part),
        n_classes=data.n_classes,
    )


def run(config: PipelineConfig, data: Dataset | None = None):
    pipe = fit_pipeline(config, data)
    return pipe, *pipe.evaluate()

