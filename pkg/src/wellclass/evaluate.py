"""Cross-validation harness and report metrics: accuracy statistics over
repeated stratified folds, misclassification routing, class counts, the
balance factor and pairwise label agreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, derive_seed, stratified_kfold
from .mlp import MlpConfig, forward_batch, init_model, train
from .mlp import predict_labels as mlp_predict_labels


class MlpClassifier:
    """Adapter giving the neural classifier the common fit/predict surface.

    Config fields other than d, n_classes and seed (which are taken from
    the data and the fit call) can be overridden at construction, e.g.
    ``MlpClassifier(epochs=500, hidden=30)``.
    """

    def __init__(self, **config_overrides):
        self.overrides = config_overrides
        self.model = None
        self.trace = None
        self.class_names: tuple[str, ...] = ()

    def fit(self, labeled: Dataset, seed: int = 0) -> "MlpClassifier":
        cfg = MlpConfig(d=labeled.d, n_classes=labeled.n_classes, seed=seed,
                        **self.overrides)
        self.model, self.trace = train(init_model(cfg), labeled)
        self.class_names = labeled.class_names
        return self

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return mlp_predict_labels(self.model, X)

    def scores_batch(self, X: np.ndarray) -> np.ndarray:
        return forward_batch(self.model, X)[0]

    def predict(self, x: np.ndarray) -> tuple[int, np.ndarray]:
        scores = self.scores_batch(np.asarray(x, dtype=np.float64)[None, :])[0]
        return int(np.argmax(scores)), scores


@dataclass(frozen=True)
class RunRecord:
    repeat: int
    fold: int
    train_accuracy: float
    test_accuracy: float


@dataclass
class AccuracyStats:
    """Mean/max/min accuracy over all recorded runs, train and test sides."""

    runs: list[RunRecord] = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def _side(self, attr: str) -> np.ndarray:
        return np.array([getattr(r, attr) for r in self.runs])

    @property
    def train_mean(self) -> float:
        return float(self._side("train_accuracy").mean())

    @property
    def train_max(self) -> float:
        return float(self._side("train_accuracy").max())

    @property
    def train_min(self) -> float:
        return float(self._side("train_accuracy").min())

    @property
    def test_mean(self) -> float:
        return float(self._side("test_accuracy").mean())

    @property
    def test_max(self) -> float:
        return float(self._side("test_accuracy").max())

    @property
    def test_min(self) -> float:
        return float(self._side("test_accuracy").min())

    def cells(self) -> tuple[str, str, str]:
        """(mean, max, min) cells formatted 'train/test' to 4 decimals."""
        return (f"{self.train_mean:.4f}/{self.test_mean:.4f}",
                f"{self.train_max:.4f}/{self.test_max:.4f}",
                f"{self.train_min:.4f}/{self.test_min:.4f}")


def run_cv(classifier, labeled: Dataset, k: int = 5, repeats: int = 25,
           seed: int = 0) -> AccuracyStats:
    """Repeated stratified k-fold evaluation: k x repeats independent runs.

    Folds are reshuffled every repeat and the classifier is refitted per
    run; each run's seed derives from (seed, repeat, fold) so any single
    run can be reproduced in isolation.  ``classifier`` needs fit(dataset,
    seed) and predict_labels(X); fit must fully replace previous state.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    stats = AccuracyStats()
    for r in range(repeats):
        folds = stratified_kfold(labeled, k, seed=derive_seed(seed, r, 0))
        for f, (train_ds, test_ds) in enumerate(folds):
            run_seed = derive_seed(seed, r, f, 1)
            try:
                classifier.fit(train_ds, run_seed)
            except Exception as exc:
                raise RuntimeError(f"fit failed at repeat {r}, fold {f}: {exc}") from exc
            train_acc = float(np.mean(classifier.predict_labels(train_ds.features)
                                      == train_ds.labels))
            test_acc = float(np.mean(classifier.predict_labels(test_ds.features)
                                     == test_ds.labels))
            stats.runs.append(RunRecord(r, f, train_acc, test_acc))
    return stats


@dataclass
class RoutingTable:
    """Full confusion matrix; the report view zeroes the diagonal so each
    row shows only where that class's misclassified samples went."""

    matrix: np.ndarray  # (C, C) ints, truth in rows, prediction in columns
    class_names: tuple[str, ...]

    def misrouted(self) -> np.ndarray:
        view = self.matrix.copy()
        np.fill_diagonal(view, 0)
        return view

    def row_totals(self) -> np.ndarray:
        return self.misrouted().sum(axis=1)

    def header(self) -> list[str]:
        return ["class", *self.class_names, "total_misclassified"]

    def rows(self) -> list[list]:
        view = self.misrouted()
        totals = self.row_totals()
        return [[self.class_names[i], *[int(v) for v in view[i]], int(totals[i])]
                for i in range(len(self.class_names))]


def routing_table(truth: np.ndarray, preds: np.ndarray,
                  class_names: tuple[str, ...]) -> RoutingTable:
    truth = np.asarray(truth, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if truth.shape != preds.shape:
        raise ValueError("truth and prediction vectors differ in length")
    c = len(class_names)
    matrix = np.zeros((c, c), dtype=np.int64)
    np.add.at(matrix, (truth, preds), 1)
    return RoutingTable(matrix, tuple(class_names))


def class_counts(preds: np.ndarray, n_classes: int) -> np.ndarray:
    """Per-class prediction counts; always sums to len(preds)."""
    preds = np.asarray(preds, dtype=np.int64)
    if preds.size and (preds.min() < 0 or preds.max() >= n_classes):
        raise ValueError("label index out of range")
    return np.bincount(preds, minlength=n_classes)


def balance_factor(counts: np.ndarray) -> float:
    """Smallest class count over largest; 1 = balanced, 0 = a class is empty."""
    counts = np.asarray(counts)
    if counts.size == 0 or np.any(counts < 0):
        raise ValueError("counts must be non-negative and non-empty")
    if counts.max() == 0:
        raise ValueError("balance factor undefined for all-zero counts")
    return float(counts.min() / counts.max())


def agreement_count(labels_a: np.ndarray, labels_b: np.ndarray) -> int:
    """Number of positions where the two assignments give the same label."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("assignments differ in length")
    return int(np.sum(a == b))
