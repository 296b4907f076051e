"""Data ingestion, seeded splitting and synthetic generators.

All randomness goes through numpy's ``PCG64`` bit generator
(``numpy.random.Generator(numpy.random.PCG64(seed))``). PCG64 streams are
specified independently of platform, so a given seed always produces the
same split or synthetic dataset.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)

_SNAP = 1e-9


class DataError(ValueError):
    """Raised for malformed input data or invalid dataset arguments."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; ``seed`` is reduced to an unsigned 64-bit value."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus targets, tagged with the learning task.

    Regression targets are float64; classification targets are int64 class
    indices in ``0..n_classes-1``.
    """

    features: np.ndarray
    targets: np.ndarray
    task: str
    n_classes: int | None = None
    feature_names: tuple[str, ...] = field(default=())
    target_name: str = "y"

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}; expected one of {TASKS}")
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        y = np.asarray(self.targets)
        if y.ndim != 1 or len(y) != x.shape[0]:
            raise DataError(
                f"features have {x.shape[0]} rows but targets have shape {y.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if self.task == CLASSIFICATION:
            yf = y.astype(np.float64)
            if not np.all(np.isfinite(yf)) or np.any(yf != np.round(yf)):
                raise DataError("classification targets must be integers")
            y = yf.astype(np.int64)
            k = self.n_classes if self.n_classes is not None else int(y.max()) + 1
            if k < 2:
                raise DataError("classification needs at least 2 classes")
            if y.size and (y.min() < 0 or y.max() > k - 1):
                raise DataError(f"class labels must lie in [0, {k - 1}]")
            object.__setattr__(self, "n_classes", int(k))
        else:
            y = y.astype(np.float64)
            if not np.all(np.isfinite(y)):
                raise DataError("targets contain non-finite values")
            object.__setattr__(self, "n_classes", None)
        names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError("feature_names length does not match the feature count")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "targets", _frozen(y))
        object.__setattr__(self, "feature_names", names)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.targets[idx],
            self.task,
            self.n_classes,
            self.feature_names,
            self.target_name,
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.task == other.task
            and self.n_classes == other.n_classes
            and self.feature_names == other.feature_names
            and self.target_name == other.target_name
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.targets, other.targets)
        )

    __hash__ = None


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint index vectors that together cover ``0..N-1``."""

    parts: tuple[np.ndarray, ...]
    seed: int

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, i):
        return self.parts[i]

    def __len__(self):
        return len(self.parts)


def load_csv(path, target_column: str, task: str) -> Dataset:
    """Read a headed, comma-separated numeric file into a :class:`Dataset`.

    Every column other than ``target_column`` becomes a feature, in header
    order. Errors name the offending row (1-based, header is row 1) and column.
    """
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}; expected one of {TASKS}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}"
                )
            values = []
            for col, cell in zip(header, row):
                if not cell.strip():
                    raise DataError(f"{path}: blank cell at row {lineno}, column {col!r}")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite cell at row {lineno}, column {col!r}")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    t = header.index(target_column)
    feature_cols = [i for i in range(len(header)) if i != t]
    y = table[:, t]
    if task == CLASSIFICATION:
        bad = np.flatnonzero(y != np.round(y))
        if bad.size:
            raise DataError(
                f"{path}: non-integer class label {y[bad[0]]!r} at row {bad[0] + 2}, "
                f"column {target_column!r}"
            )
    return Dataset(
        table[:, feature_cols],
        y,
        task,
        feature_names=tuple(header[i] for i in feature_cols),
        target_name=target_column,
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` so that :func:`load_csv` reproduces it exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*dataset.feature_names, dataset.target_name])
        for x, y in zip(dataset.features, dataset.targets):
            target = str(int(y)) if dataset.task == CLASSIFICATION else repr(float(y))
            writer.writerow([repr(float(v)) for v in x] + [target])


def _floor_snap(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP else math.floor(v)


def part_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``n`` items to ``fractions``.

    Leftover items go to the parts with the largest fractional remainders;
    equal remainders favour the later part, so 506 rows at (0.5, 0.25, 0.25)
    become (253, 126, 127).
    """
    raw = [n * f for f in fractions]
    base = [_floor_snap(r) for r in raw]
    rem = [0.0 if r - b < _SNAP else r - b for r, b in zip(raw, base)]
    leftover = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (rem[i], i), reverse=True)
    for i in order[:leftover]:
        base[i] += 1
    return base


def split(dataset: Dataset | int, fractions: Sequence[float], seed: int) -> SplitIndices:
    """Shuffle ``0..N-1`` with PCG64(seed) and cut it into consecutive parts.

    ``dataset`` may also be a plain row count. Each part is returned sorted.
    """
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    fractions = [float(f) for f in fractions]
    if len(fractions) not in (3, 4):
        raise DataError(f"expected 3 or 4 split fractions, got {len(fractions)}")
    if any(f <= 0 for f in fractions):
        raise DataError(f"split fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got sum {sum(fractions)!r}")
    sizes = part_sizes(int(n), fractions)
    if any(s == 0 for s in sizes):
        raise DataError(f"split of {n} rows by {fractions} leaves an empty part {sizes}")
    perm = make_rng(seed).permutation(int(n))
    bounds = np.cumsum([0, *sizes])
    parts = tuple(np.sort(perm[bounds[i] : bounds[i + 1]]) for i in range(len(sizes)))
    return SplitIndices(parts, int(seed))


def make_synthetic_regression(
    n: int, noise: str = "homoscedastic", sigma: float = 1.0, seed: int = 0
) -> Dataset:
    """Draw ``x ~ U(0, 10)`` and ``y = 2x + 1 + scale(x) * eps`` with standard normal eps.

    ``scale(x)`` is ``sigma`` for homoscedastic noise and ``0.2 + 0.3x`` for
    heteroscedastic noise. The x column is drawn first, then eps.
    """
    if n < 10:
        raise DataError(f"need n >= 10 synthetic rows, got {n}")
    if noise not in ("homoscedastic", "heteroscedastic"):
        raise DataError(f"unknown noise model {noise!r}")
    rng = make_rng(seed)
    x = rng.uniform(0.0, 10.0, size=n)
    eps = rng.standard_normal(n)
    scale = sigma if noise == "homoscedastic" else 0.2 + 0.3 * x
    y = 2.0 * x + 1.0 + scale * eps
    return Dataset(x[:, None], y, REGRESSION, feature_names=("x",))


def blob_means(
    n_classes: int, n_features: int = 2, separation: float = 4.0, weak_class: int | None = None
) -> np.ndarray:
    """Class means for :func:`make_synthetic_classification`.

    Classes sit evenly on a circle of radius ``separation`` in the first two
    coordinates. A ``weak_class`` is moved 80% of the way towards the next
    class on the circle, so a classifier confuses it with that neighbour.
    """
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    means = np.zeros((n_classes, max(n_features, 2)))
    means[:, 0] = separation * np.cos(angles)
    means[:, 1] = separation * np.sin(angles)
    if weak_class is not None:
        nb = (weak_class + 1) % n_classes
        means[weak_class] = 0.2 * means[weak_class] + 0.8 * means[nb]
    return means[:, :n_features] if n_features >= 2 else means[:, :1]


def make_synthetic_classification(
    n: int,
    n_classes: int,
    seed: int = 0,
    priors: Sequence[float] | None = None,
    separation: float = 4.0,
    n_features: int = 2,
    weak_class: int | None = None,
) -> Dataset:
    """Isotropic unit-variance Gaussian blobs, one per class.

    Class counts are fixed by largest-remainder rounding of ``n * priors``
    (at least one row per class), so every class always appears. Labels are
    then shuffled and features drawn as ``mean[label] + N(0, I)``.
    """
    if n_classes < 2:
        raise DataError("need at least 2 classes")
    if n < 10 * n_classes:
        raise DataError(f"need n >= 10*K = {10 * n_classes} rows, got {n}")
    if weak_class is not None and not 0 <= weak_class < n_classes:
        raise DataError(f"weak_class {weak_class} outside [0, {n_classes - 1}]")
    p = np.full(n_classes, 1.0 / n_classes) if priors is None else np.asarray(priors, float)
    if p.shape != (n_classes,) or np.any(p <= 0):
        raise DataError("priors must be K positive numbers")
    p = p / p.sum()
    counts = np.array(part_sizes(n, list(p)))
    while np.any(counts == 0):
        counts[np.argmin(counts)] += 1
        counts[np.argmax(counts)] -= 1
    rng = make_rng(seed)
    labels = rng.permutation(np.repeat(np.arange(n_classes), counts))
    means = blob_means(n_classes, n_features, separation, weak_class)
    x = means[labels] + rng.standard_normal((n, means.shape[1]))
    return Dataset(x, labels, CLASSIFICATION, n_classes=n_classes)
