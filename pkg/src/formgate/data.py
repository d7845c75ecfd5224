"""Dataset ingestion, standardization, and splitting.

Datasets are immutable after construction. Standardization statistics are
always fit on the training split only and reused verbatim for validation
and test, so no held-out statistic can leak into preprocessing.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import substream

TaskKind = str  # "regression" | "binary" | "multiclass"


@dataclass(frozen=True)
class StandardizationStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float | None  # None for classification targets
    y_std: float | None

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: TaskKind = "regression"
    feature_names: tuple[str, ...] | None = None
    label_mapping: dict[str, int] | None = None
    dropped_rows: int = 0
    stats: StandardizationStats | None = None

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if len(self.X) != len(self.y):
            raise ValueError("X and y disagree in length")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X contains non-finite values")
        if self.task == "regression" and not np.all(np.isfinite(self.y)):
            raise ValueError("y contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.task == "regression":
            raise ValueError("regression targets have no classes")
        return int(self.y.max()) + 1 if len(self.y) else 0


def load_csv(path: str | Path, target_column: str, task_kind: TaskKind = "regression") -> Dataset:
    """Parse a headed CSV into a Dataset.

    Rows with any missing cell are dropped and counted. Classification
    targets are mapped to contiguous class indices (labels sorted
    lexicographically) with the mapping recorded on the dataset.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if target_column not in header:
            raise ValueError(f"{path}: missing target column {target_column!r}")
        t_idx = header.index(target_column)
        feature_names = tuple(h for i, h in enumerate(header) if i != t_idx)

        rows: list[list[float]] = []
        raw_targets: list[str] = []
        dropped = 0
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                dropped += 1
                continue
            if any(cell.strip() == "" for cell in row):
                dropped += 1
                continue
            feats = []
            for col_idx, cell in enumerate(row):
                if col_idx == t_idx:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric value {cell!r} at row {row_no}, "
                        f"column {header[col_idx]!r}"
                    ) from None
            rows.append(feats)
            raw_targets.append(row[t_idx])

    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    mapping = None
    if task_kind == "regression":
        try:
            y = np.asarray([float(t) for t in raw_targets])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric regression target: {exc}") from None
        task = "regression"
    else:
        labels = sorted(set(raw_targets))
        mapping = {lab: i for i, lab in enumerate(labels)}
        y = np.asarray([mapping[t] for t in raw_targets], dtype=np.int64)
        task = "binary" if len(labels) == 2 else "multiclass"
    return Dataset(X, y, task=task, feature_names=feature_names,
                   label_mapping=mapping, dropped_rows=dropped)


def split_and_standardize(
    ds: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle, split train/val/test, standardize with train-split statistics.

    A fraction of exactly 0.0 yields an empty split (the plain 80/20
    protocol passes (0.8, 0.0, 0.2)); a positive fraction that rounds to
    zero samples is an error. Constant features are dropped with a warning.
    Regression targets are standardized; classification targets untouched.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    n = ds.n
    perm = substream(seed, "split").permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    bounds = [0, n_train, n_train + n_val, n]
    for frac, lo, hi in zip(fractions, bounds[:-1], bounds[1:]):
        if frac > 0.0 and hi - lo < 1:
            raise ValueError(f"split fraction {frac} yields fewer than 1 sample")
    idx_train = perm[: bounds[1]]
    idx_val = perm[bounds[1] : bounds[2]]
    idx_test = perm[bounds[2] :]

    x_mean = ds.X[idx_train].mean(axis=0)
    x_std = ds.X[idx_train].std(axis=0)
    keep = x_std > 0.0
    if not np.all(keep):
        dropped = [i for i, k in enumerate(keep) if not k]
        names = (
            [ds.feature_names[i] for i in dropped] if ds.feature_names else dropped
        )
        warnings.warn(f"dropping constant features: {names}")
    x_mean, x_std = x_mean[keep], x_std[keep]

    if ds.task == "regression":
        y_mean = float(ds.y[idx_train].mean())
        y_std = float(ds.y[idx_train].std())
        if y_std == 0.0:
            y_std = 1.0
    else:
        y_mean = y_std = None
    stats = StandardizationStats(x_mean, x_std, y_mean, y_std)

    names = (
        tuple(nm for nm, k in zip(ds.feature_names, keep) if k) if ds.feature_names else None
    )

    def build(idx: np.ndarray) -> Dataset:
        X = (ds.X[idx][:, keep] - x_mean) / x_std
        y = ds.y[idx]
        if ds.task == "regression":
            y = (y - y_mean) / y_std
        return Dataset(X, y, task=ds.task, feature_names=names,
                       label_mapping=ds.label_mapping, stats=stats)

    return build(idx_train), build(idx_val), build(idx_test)


def save_dataset(ds: Dataset, directory: str | Path) -> None:
    """Write {meta.json, X.csv, y.csv}; floats serialized via repr so the
    round trip is bit-exact."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "task": ds.task,
        "feature_names": list(ds.feature_names) if ds.feature_names else None,
        "label_mapping": ds.label_mapping,
        "dropped_rows": ds.dropped_rows,
        "n": ds.n,
        "d": ds.d,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    with (directory / "X.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        for row in ds.X:
            w.writerow([repr(float(v)) for v in row])
    with (directory / "y.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        for v in ds.y:
            w.writerow([repr(int(v)) if ds.task != "regression" else repr(float(v))])


def load_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    with (directory / "X.csv").open(newline="") as fh:
        X = np.asarray([[float(c) for c in row] for row in csv.reader(fh)])
    X = X.reshape(meta["n"], meta["d"])
    with (directory / "y.csv").open(newline="") as fh:
        raw = [row[0] for row in csv.reader(fh)]
    if meta["task"] == "regression":
        y = np.asarray([float(v) for v in raw])
    else:
        y = np.asarray([int(v) for v in raw], dtype=np.int64)
    return Dataset(
        X, y, task=meta["task"],
        feature_names=tuple(meta["feature_names"]) if meta["feature_names"] else None,
        label_mapping=meta["label_mapping"], dropped_rows=meta["dropped_rows"],
    )
