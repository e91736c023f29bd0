"""Comparison classifiers: 1-NN, Gaussian naive Bayes, linear discriminant
analysis, linear one-vs-rest SVM and a bagged-tree ensemble.

All five share the same surface: ``fit(labeled, seed)`` then
``scores_batch`` / ``predict_labels`` / ``predict``.  Prediction is the
argmax of the per-class score vector with ties resolved to the lowest
class index, so every downstream table is deterministic.  Fitting is
deterministic given (data, seed); KNN and naive Bayes ignore the seed
entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset


class BaselineClassifier:
    """Shared prediction plumbing; subclasses implement fit and scoring."""

    class_names: tuple[str, ...] = ()

    def fit(self, labeled: Dataset, seed: int = 0) -> "BaselineClassifier":
        raise NotImplementedError

    def scores_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_fitted(self) -> None:
        if not self.class_names:
            raise RuntimeError("classifier has not been fitted")

    def _check_width(self, X: np.ndarray, d: int) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != d:
            raise ValueError(f"expected (n, {d}) features, got shape {X.shape}")
        return X

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores_batch(X), axis=1)

    def predict(self, x: np.ndarray) -> tuple[int, np.ndarray]:
        scores = self.scores_batch(np.asarray(x, dtype=np.float64)[None, :])[0]
        return int(np.argmax(scores)), scores


def _validate_training_set(labeled: Dataset) -> None:
    if labeled.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    if np.any(~labeled.is_labeled()):
        raise ValueError("training set contains unlabelled samples")


class KnnClassifier(BaselineClassifier):
    """k-nearest neighbours with Euclidean distance (default k=1).

    The k nearest points are taken in (distance, training index) order;
    the score vector is the vote fraction per class and vote ties resolve
    to the lowest class index.
    """

    def __init__(self, k: int = 1):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.train_x: np.ndarray | None = None
        self.train_y: np.ndarray | None = None

    def fit(self, labeled: Dataset, seed: int = 0) -> "KnnClassifier":
        _validate_training_set(labeled)
        if labeled.n < self.k:
            raise ValueError(f"k={self.k} exceeds training size {labeled.n}")
        self.train_x = labeled.features
        self.train_y = labeled.labels
        self.class_names = labeled.class_names
        return self

    def scores_batch(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        X = self._check_width(X, self.train_x.shape[1])
        c = len(self.class_names)
        # squared-distance expansion keeps memory at (m, n) instead of (m, n, d)
        d2 = (X ** 2).sum(axis=1)[:, None] - 2.0 * X @ self.train_x.T \
            + (self.train_x ** 2).sum(axis=1)[None, :]
        scores = np.zeros((X.shape[0], c))
        if self.k == 1:
            nearest = np.argmin(d2, axis=1)  # first minimum = lowest training index
            scores[np.arange(X.shape[0]), self.train_y[nearest]] = 1.0
            return scores
        order_idx = np.arange(self.train_x.shape[0])
        for i in range(X.shape[0]):
            nearest = np.lexsort((order_idx, d2[i]))[:self.k]
            votes = np.bincount(self.train_y[nearest], minlength=c)
            scores[i] = votes / self.k
        return scores

    def params(self) -> dict:
        return {"kind": "knn", "k": self.k, "class_names": list(self.class_names),
                "train_x": self.train_x.tolist(), "train_y": self.train_y.tolist()}


class GaussianNbClassifier(BaselineClassifier):
    """Naive Bayes with per-class diagonal Gaussians.

    Per-feature variances are floored at 1e-9 (post-normalization scale)
    so constant-within-class channels do not produce zero variance.
    Scores are normalized posteriors; classes absent from training data
    get probability zero.
    """

    VAR_FLOOR = 1e-9

    def __init__(self) -> None:
        self.log_priors: np.ndarray | None = None
        self.means: np.ndarray | None = None
        self.variances: np.ndarray | None = None

    def fit(self, labeled: Dataset, seed: int = 0) -> "GaussianNbClassifier":
        _validate_training_set(labeled)
        c, d = labeled.n_classes, labeled.d
        counts = labeled.class_counts()
        self.log_priors = np.full(c, -np.inf)
        self.means = np.zeros((c, d))
        self.variances = np.full((c, d), self.VAR_FLOOR)
        for cls in range(c):
            members = labeled.features[labeled.labels == cls]
            if members.shape[0] == 0:
                continue
            self.log_priors[cls] = np.log(counts[cls] / labeled.n)
            self.means[cls] = members.mean(axis=0)
            self.variances[cls] = np.maximum(members.var(axis=0), self.VAR_FLOOR)
        self.class_names = labeled.class_names
        return self

    @property
    def priors(self) -> np.ndarray:
        return np.exp(self.log_priors)

    def log_joint(self, X: np.ndarray) -> np.ndarray:
        """log p(x | class) + log p(class), one column per class."""
        self._check_fitted()
        X = self._check_width(X, self.means.shape[1])
        out = np.empty((X.shape[0], self.means.shape[0]))
        for cls in range(self.means.shape[0]):
            var = self.variances[cls]
            ll = -0.5 * (np.log(2.0 * np.pi * var) + (X - self.means[cls]) ** 2 / var).sum(axis=1)
            out[:, cls] = self.log_priors[cls] + ll
        return out

    def scores_batch(self, X: np.ndarray) -> np.ndarray:
        lj = self.log_joint(X)
        shifted = lj - lj.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def params(self) -> dict:
        return {"kind": "naive_bayes", "class_names": list(self.class_names),
                "log_priors": self.log_priors.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist()}


class LdaClassifier(BaselineClassifier):
    """Linear discriminant analysis with a shared (ridged) covariance.

    The pooled covariance gets 1e-6 * trace / d added to its diagonal
    before inversion; scores are softmax-normalized discriminants, which
    equal the class posteriors under the shared-covariance model.
    """

    RIDGE = 1e-6

    def __init__(self) -> None:
        self.means: np.ndarray | None = None
        self.log_priors: np.ndarray | None = None
        self.precision: np.ndarray | None = None

    def fit(self, labeled: Dataset, seed: int = 0) -> "LdaClassifier":
        _validate_training_set(labeled)
        c, d = labeled.n_classes, labeled.d
        counts = labeled.class_counts()
        present = np.flatnonzero(counts)
        self.means = np.zeros((c, d))
        self.log_priors = np.full(c, -np.inf)
        scatter = np.zeros((d, d))
        for cls in present:
            members = labeled.features[labeled.labels == cls]
            mu = members.mean(axis=0)
            self.means[cls] = mu
            self.log_priors[cls] = np.log(counts[cls] / labeled.n)
            centered = members - mu
            scatter += centered.T @ centered
        dof = max(labeled.n - present.size, 1)
        cov = scatter / dof
        cov[np.diag_indices(d)] += self.RIDGE * np.trace(cov) / d
        try:
            self.precision = np.linalg.inv(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("pooled covariance is singular beyond ridge repair") from exc
        self.class_names = labeled.class_names
        return self

    def discriminants(self, X: np.ndarray) -> np.ndarray:
        """x' Sigma^-1 mu_c - mu_c' Sigma^-1 mu_c / 2 + log prior, per class."""
        self._check_fitted()
        X = self._check_width(X, self.means.shape[1])
        proj = self.means @ self.precision  # (C, d)
        lin = X @ proj.T
        offset = -0.5 * np.einsum("cd,cd->c", proj, self.means) + self.log_priors
        return lin + offset

    def scores_batch(self, X: np.ndarray) -> np.ndarray:
        disc = self.discriminants(X)
        shifted = disc - disc.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def params(self) -> dict:
        return {"kind": "discriminant_analysis", "class_names": list(self.class_names),
                "means": self.means.tolist(), "log_priors": self.log_priors.tolist(),
                "precision": self.precision.tolist()}


class LinearSvmClassifier(BaselineClassifier):
    """Linear one-vs-rest SVM trained by per-sample subgradient descent on
    the hinge loss.  Scores are raw margins (not probabilities)."""

    def __init__(self, step_size: float = 0.05, epochs: int = 200, margin: float = 1.0):
        if step_size <= 0 or epochs < 1 or margin <= 0:
            raise ValueError("step_size, epochs and margin must be positive")
        self.step_size = step_size
        self.epochs = epochs
        self.margin = margin
        self.weights: np.ndarray | None = None  # (C, d+1), bias last

    def fit(self, labeled: Dataset, seed: int = 0) -> "LinearSvmClassifier":
        _validate_training_set(labeled)
        c, d = labeled.n_classes, labeled.d
        rng = np.random.default_rng(seed)
        w = np.zeros((c, d + 1))
        x_ext = np.hstack([labeled.features, np.ones((labeled.n, 1))])
        signs = np.where(labeled.labels[:, None] == np.arange(c)[None, :], 1.0, -1.0)
        for _ in range(self.epochs):
            for i in rng.permutation(labeled.n):
                violated = signs[i] * (w @ x_ext[i]) < self.margin
                if np.any(violated):
                    w[violated] += self.step_size * np.outer(signs[i][violated], x_ext[i])
        self.weights = w
        self.class_names = labeled.class_names
        return self

    def scores_batch(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        X = self._check_width(X, self.weights.shape[1] - 1)
        return X @ self.weights[:, :-1].T + self.weights[:, -1]

    def params(self) -> dict:
        return {"kind": "svm", "class_names": list(self.class_names),
                "step_size": self.step_size, "epochs": self.epochs,
                "margin": self.margin, "weights": self.weights.tolist()}


@dataclass
class _Tree:
    # flat node arrays; leaves point to themselves so vectorized routing
    # can run a fixed number of hops
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray
    depth: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(self.depth + 1):
            feat = self.feature[node]
            internal = feat >= 0
            if not np.any(internal):
                break
            go_left = np.zeros_like(internal)
            go_left[internal] = X[internal, feat[internal]] <= self.threshold[node[internal]]
            node = np.where(internal & go_left, self.left[node],
                            np.where(internal, self.right[node], node))
        return self.leaf_class[node]


def _gini_best_split(X: np.ndarray, y: np.ndarray, n_classes: int) -> tuple[int, float, float] | None:
    """Best (feature, threshold, weighted_gini) for this node, or None if no
    feature varies.  Ties prefer the lower feature index, then threshold."""
    n = y.size
    best: tuple[float, int, float] | None = None  # (gini, feature, threshold)
    for j in range(X.shape[1]):
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        boundaries = np.flatnonzero(xs[1:] > xs[:-1]) + 1
        if boundaries.size == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[order]] = 1.0
        prefix = onehot.cumsum(axis=0)
        left_counts = prefix[boundaries - 1]
        total = prefix[-1]
        right_counts = total - left_counts
        n_left = boundaries.astype(np.float64)
        n_right = n - n_left
        gini_left = 1.0 - ((left_counts / n_left[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((right_counts / n_right[:, None]) ** 2).sum(axis=1)
        weighted = (n_left * gini_left + n_right * gini_right) / n
        k = int(np.argmin(weighted))
        b = boundaries[k]
        threshold = 0.5 * (xs[b - 1] + xs[b])
        candidate = (float(weighted[k]), j, float(threshold))
        if best is None or candidate < best:
            best = candidate
    if best is None:
        return None
    gini, feature, threshold = best
    return feature, threshold, gini


def _build_tree(X: np.ndarray, y: np.ndarray, n_classes: int,
                max_depth: int | None) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_class: list[int] = []
    max_seen = [0]

    def majority(labels: np.ndarray) -> int:
        return int(np.argmax(np.bincount(labels, minlength=n_classes)))

    def add_leaf(labels: np.ndarray) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(node)
        right.append(node)
        leaf_class.append(majority(labels))
        return node

    def build(idx: np.ndarray, depth: int) -> int:
        max_seen[0] = max(max_seen[0], depth)
        labels = y[idx]
        pure = np.all(labels == labels[0])
        depth_ok = max_depth is None or depth < max_depth
        if pure or not depth_ok or idx.size < 2:
            return add_leaf(labels)
        split = _gini_best_split(X[idx], labels, n_classes)
        if split is None:  # node is impure but no feature varies
            return add_leaf(labels)
        feat, thr, _ = split
        node = len(feature)
        feature.append(feat)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        leaf_class.append(majority(labels))
        mask = X[idx, feat] <= thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(y.size), 0)
    return _Tree(np.array(feature), np.array(threshold), np.array(left),
                 np.array(right), np.array(leaf_class), max_seen[0])


class BaggedTreesClassifier(BaselineClassifier):
    """Bagging over Gini-split CART trees; scores are vote fractions.

    With a single tree no bootstrap is drawn (the ensemble degenerates to
    one CART fitted on the full training set); with more trees each is
    fitted on a seeded bootstrap replica.
    """

    def __init__(self, n_trees: int = 25, max_depth: int | None = 8):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.trees: list[_Tree] = []
        self.d = 0

    def fit(self, labeled: Dataset, seed: int = 0) -> "BaggedTreesClassifier":
        _validate_training_set(labeled)
        rng = np.random.default_rng(seed)
        self.d = labeled.d
        self.trees = []
        for t in range(self.n_trees):
            if self.n_trees == 1:
                idx = np.arange(labeled.n)
            else:
                idx = rng.integers(0, labeled.n, labeled.n)
            self.trees.append(_build_tree(labeled.features[idx], labeled.labels[idx],
                                          labeled.n_classes, self.max_depth))
        self.class_names = labeled.class_names
        return self

    def scores_batch(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        c = len(self.class_names)
        X = self._check_width(X, self.d)
        votes = np.zeros((X.shape[0], c))
        for tree in self.trees:
            votes[np.arange(X.shape[0]), tree.predict(X)] += 1.0
        return votes / self.n_trees

    def params(self) -> dict:
        return {"kind": "ensemble", "class_names": list(self.class_names),
                "n_trees": self.n_trees, "max_depth": self.max_depth, "d": self.d,
                "trees": [{"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                           "left": t.left.tolist(), "right": t.right.tolist(),
                           "leaf_class": t.leaf_class.tolist(), "depth": t.depth}
                          for t in self.trees]}


# Fixed presentation order for comparison tables.
BASELINE_KINDS = ("discriminant_analysis", "knn", "naive_bayes", "ensemble", "svm")


def make_baseline(kind: str, **hyper) -> BaselineClassifier:
    if kind == "knn":
        return KnnClassifier(**hyper)
    if kind == "naive_bayes":
        return GaussianNbClassifier(**hyper)
    if kind == "discriminant_analysis":
        return LdaClassifier(**hyper)
    if kind == "svm":
        return LinearSvmClassifier(**hyper)
    if kind == "ensemble":
        return BaggedTreesClassifier(**hyper)
    raise ValueError(f"unknown baseline kind {kind!r}")


def fit_baseline(kind: str, labeled: Dataset, seed: int = 0, **hyper) -> BaselineClassifier:
    return make_baseline(kind, **hyper).fit(labeled, seed)


def classify_all(model, pool: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Label every pool row; returns (labels, per-class counts)."""
    c = len(model.class_names)
    if pool.n == 0:
        return np.empty(0, dtype=np.int64), np.zeros(c, dtype=np.int64)
    labels = model.predict_labels(pool.features)
    return labels, np.bincount(labels, minlength=c)


def save_model_json(model: BaselineClassifier) -> str:
    return json.dumps(model.params())


def load_model_json(text: str) -> BaselineClassifier:
    obj = json.loads(text)
    kind = obj.pop("kind")
    class_names = tuple(obj.pop("class_names"))
    if kind == "knn":
        clf = KnnClassifier(obj["k"])
        clf.train_x = np.array(obj["train_x"])
        clf.train_y = np.array(obj["train_y"], dtype=np.int64)
    elif kind == "naive_bayes":
        clf = GaussianNbClassifier()
        clf.log_priors = np.array(obj["log_priors"])
        clf.means = np.array(obj["means"])
        clf.variances = np.array(obj["variances"])
    elif kind == "discriminant_analysis":
        clf = LdaClassifier()
        clf.means = np.array(obj["means"])
        clf.log_priors = np.array(obj["log_priors"])
        clf.precision = np.array(obj["precision"])
    elif kind == "svm":
        clf = LinearSvmClassifier(obj["step_size"], obj["epochs"], obj["margin"])
        clf.weights = np.array(obj["weights"])
    elif kind == "ensemble":
        clf = BaggedTreesClassifier(obj["n_trees"], obj["max_depth"])
        clf.d = obj["d"]
        clf.trees = [_Tree(np.array(t["feature"]), np.array(t["threshold"]),
                           np.array(t["left"]), np.array(t["right"]),
                           np.array(t["leaf_class"], dtype=np.int64), t["depth"])
                     for t in obj["trees"]]
    else:
        raise ValueError(f"unknown baseline kind {kind!r}")
    clf.class_names = class_names
    return clf
