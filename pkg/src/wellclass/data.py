"""Dataset model, CSV ingestion, normalization, splitting and rebalancing.

Feature matrices are float64 numpy arrays of shape (n, d).  Class labels are
stored as integer indices into ``Dataset.class_names``; the sentinel
``UNLABELED`` (-1) marks samples without a label.  Datasets are treated as
immutable: their arrays are marked read-only at construction and every
operation returns a new value.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

UNLABELED = -1

DEFAULT_CLASS_NAMES = ("D", "W", "I", "O")


def derive_seed(master: int, *indices: int) -> int:
    """Derive an independent child seed from a master seed and index path.

    Uses numpy's SeedSequence mixing so that (master, i) and (master, j)
    streams are statistically independent and reproducible in isolation.
    """
    return int(np.random.SeedSequence([int(master), *map(int, indices)]).generate_state(1)[0])


@dataclass(frozen=True)
class ClassLabel:
    """A class identity: position in the label set plus display name."""

    index: int
    name: str


@dataclass(frozen=True)
class Sample:
    """One row: feature vector plus optional label index (UNLABELED if none)."""

    features: np.ndarray
    label: int = UNLABELED


@dataclass
class Dataset:
    """An ordered collection of samples sharing one feature schema.

    ``labels[i] == UNLABELED`` marks sample i as unlabelled; any other value
    must be a valid index into ``class_names``.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    feature_names: tuple[str, ...] = ()
    tag: str = ""

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2D array")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be 1D with one entry per sample")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        if not self.feature_names:
            self.feature_names = tuple(f"f{j + 1}" for j in range(self.d))
        if len(self.feature_names) != self.d:
            raise ValueError("feature_names length must equal feature count")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        bad = (self.labels != UNLABELED) & ((self.labels < 0) | (self.labels >= self.n_classes))
        if np.any(bad):
            raise ValueError(f"label index out of range at row {int(np.flatnonzero(bad)[0])}")
        self.features.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def classes(self) -> tuple[ClassLabel, ...]:
        return tuple(ClassLabel(i, name) for i, name in enumerate(self.class_names))

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Sample]:
        for i in range(self.n):
            yield Sample(self.features[i], int(self.labels[i]))

    def is_labeled(self) -> np.ndarray:
        return self.labels != UNLABELED

    def labeled_subset(self) -> "Dataset":
        return self.subset(np.flatnonzero(self.is_labeled()))

    def unlabeled_subset(self) -> "Dataset":
        return self.subset(np.flatnonzero(~self.is_labeled()))

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_names,
                       self.feature_names, self.tag)

    def class_counts(self) -> np.ndarray:
        """Per-class counts over the labelled samples only."""
        lab = self.labels[self.is_labeled()]
        return np.bincount(lab, minlength=self.n_classes)

    def replace_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, labels, self.class_names, self.feature_names, self.tag)


def concat(parts: Sequence[Dataset]) -> Dataset:
    """Stack datasets sharing a schema, preserving order."""
    if not parts:
        raise ValueError("nothing to concatenate")
    first = parts[0]
    for p in parts[1:]:
        if p.d != first.d or p.class_names != first.class_names:
            raise ValueError("datasets do not share a schema")
    return Dataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        first.class_names,
        first.feature_names,
        first.tag,
    )


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of a dataset CSV.

    ``label_column`` names the (optional) trailing label column; ``None``
    means every column is a feature and all rows are unlabelled.  Label
    tokens are case-sensitive and must come from ``class_names``; an empty
    label cell marks the row as unlabelled.
    """

    label_column: str | None = "label"
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    d: int | None = None  # expected feature count; None = take from header


def load_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Read a dataset CSV: one header row, d numeric columns, optional label.

    Raises ValueError naming the offending row/column for ragged rows,
    non-numeric fields and unknown label tokens.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if schema.label_column is not None and header and header[-1] == schema.label_column:
            feature_names = header[:-1]
            has_label_col = True
        else:
            feature_names = header
            has_label_col = False
        d = len(feature_names)
        if schema.d is not None and d != schema.d:
            raise ValueError(f"{path}: expected {schema.d} feature columns, header has {d}")
        label_of = {name: i for i, name in enumerate(schema.class_names)}

        rows: list[list[float]] = []
        labels: list[int] = []
        expected = d + (1 if has_label_col else 0)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != expected:
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {expected}")
            values = []
            for j in range(d):
                try:
                    values.append(float(row[j]))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric field at row {lineno}, column {feature_names[j]!r}"
                    ) from None
            token = row[d].strip() if has_label_col else ""
            if token == "":
                labels.append(UNLABELED)
            elif token in label_of:
                labels.append(label_of[token])
            else:
                raise ValueError(f"{path}: unknown label token {token!r} at row {lineno}")
            rows.append(values)

    features = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    return Dataset(features, np.array(labels, dtype=np.int64), schema.class_names,
                   tuple(feature_names), tag=path.name)


def save_csv(data: Dataset, path: str | Path, label_column: str = "label") -> None:
    """Write a dataset CSV that round-trips exactly through load_csv.

    Floats are written with repr precision so float64 values survive the
    text round trip bit-for-bit.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*data.feature_names, label_column])
        for i in range(data.n):
            row = [repr(v) for v in data.features[i].tolist()]
            lab = int(data.labels[i])
            row.append("" if lab == UNLABELED else data.class_names[lab])
            writer.writerow(row)


@dataclass(frozen=True)
class NormParams:
    """Per-feature affine normalization: x' = (x - lo) / (hi - lo).

    For min-max scaling lo/hi are the feature minima/maxima; for z-score
    they hold (mean, mean + std) so the same transform applies.  Features
    with hi == lo are constant and map to 0.0.
    """

    lo: np.ndarray
    hi: np.ndarray
    method: str = "minmax"

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("lo/hi must be 1D vectors of equal length")
        if np.any(self.hi < self.lo):
            raise ValueError("hi must be >= lo for every feature")

    @property
    def constant_features(self) -> np.ndarray:
        return np.flatnonzero(self.hi == self.lo)

    def to_json(self) -> str:
        return json.dumps({"min": self.lo.tolist(), "max": self.hi.tolist(),
                           "method": self.method})

    @classmethod
    def from_json(cls, text: str) -> "NormParams":
        obj = json.loads(text)
        return cls(np.array(obj["min"]), np.array(obj["max"]), obj.get("method", "minmax"))


def fit_norm(data: Dataset, method: str = "minmax") -> NormParams:
    """Compute normalization statistics over every sample, labelled or not."""
    if data.n == 0:
        raise ValueError("cannot normalize an empty dataset")
    if method == "minmax":
        lo = data.features.min(axis=0)
        hi = data.features.max(axis=0)
    elif method == "zscore":
        mean = data.features.mean(axis=0)
        std = data.features.std(axis=0)
        lo, hi = mean, mean + std
    else:
        raise ValueError(f"unknown normalization method {method!r}")
    params = NormParams(lo, hi, method)
    if params.constant_features.size:
        names = [data.feature_names[j] for j in params.constant_features]
        warnings.warn(f"constant feature(s) mapped to 0.0: {', '.join(names)}",
                      stacklevel=2)
    return params


def apply_norm(params: NormParams, data: Dataset) -> Dataset:
    if data.d != params.lo.size:
        raise ValueError("normalization params do not match feature count")
    span = params.hi - params.lo
    safe = np.where(span == 0.0, 1.0, span)
    scaled = (data.features - params.lo) / safe
    scaled[:, params.constant_features] = 0.0
    return Dataset(scaled, data.labels, data.class_names, data.feature_names, data.tag)


def normalize(data: Dataset, method: str = "minmax") -> tuple[Dataset, NormParams]:
    """Scale features to [0, 1] (min-max) or unit variance (zscore).

    Statistics are taken over the full dataset before any splitting, so the
    same parameters can be reapplied to held-out or future samples.
    """
    params = fit_norm(data, method)
    return apply_norm(params, data), params


def stratified_kfold_indices(labels: np.ndarray, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Index-level stratified k-fold split.

    Within each class the sample indices are shuffled with a seeded
    generator and dealt round-robin to the k folds, so per-class fold
    sizes differ by at most one and the assignment is deterministic in
    the seed.  k may exceed a class's size (k = n gives leave-one-out);
    it cannot exceed the total sample count.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > labels.size:
        raise ValueError(f"k={k} exceeds the {labels.size} available samples")
    if np.any(labels == UNLABELED):
        raise ValueError("stratified split requires every sample to be labelled")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        # stagger class starts so small classes do not all pile into fold 0
        fold_of[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    out = []
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        out.append((train, test))
    return out


def stratified_kfold(labeled: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Split a fully labelled dataset into k stratified (train, test) pairs."""
    pairs = stratified_kfold_indices(labeled.labels, k, seed)
    return [(labeled.subset(tr), labeled.subset(te)) for tr, te in pairs]


def oversample_balance(labeled: Dataset, seed: int) -> Dataset:
    """Equalize class sizes by duplicating under-represented samples.

    Every original sample is kept (in order); each minority class is then
    topped up to the majority count by seeded sampling with replacement
    from its own members.  Feature vectors are never altered.
    """
    if np.any(~labeled.is_labeled()):
        raise ValueError("oversampling requires every sample to be labelled")
    counts = labeled.class_counts()
    if np.any(counts == 0):
        empty = labeled.class_names[int(np.flatnonzero(counts == 0)[0])]
        raise ValueError(f"cannot balance: class {empty!r} has no samples")
    target = int(counts.max())
    rng = np.random.default_rng(seed)
    extra: list[np.ndarray] = []
    for cls in range(labeled.n_classes):
        members = np.flatnonzero(labeled.labels == cls)
        deficit = target - members.size
        if deficit > 0:
            extra.append(rng.choice(members, size=deficit, replace=True))
    if not extra:
        return labeled
    idx = np.concatenate([np.arange(labeled.n), *extra])
    return labeled.subset(idx)
