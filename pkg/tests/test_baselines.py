"""Baseline classifiers against hand-rolled oracles."""

import math

import numpy as np
import pytest

from wellclass.baselines import (
    BaggedTreesClassifier,
    GaussianNbClassifier,
    KnnClassifier,
    LdaClassifier,
    LinearSvmClassifier,
    classify_all,
    fit_baseline,
    load_model_json,
    make_baseline,
    save_model_json,
)
from wellclass.data import Dataset, normalize
from wellclass.synth import blob_config, generate

CLASSES = ("D", "W", "I", "O")


def _blobs(counts, pool_counts=None, d=5, seed=0, class_names=None, separation=6.0):
    names = class_names or CLASSES[:len(counts)]
    cfg = blob_config(counts, pool_counts or tuple(0 for _ in counts), d=d,
                      separation=separation, class_names=names, seed=seed)
    return generate(cfg)


class TestKnn:
    def test_fit_stores_training_set_verbatim(self):
        labeled, _, _ = _blobs((5, 5))
        clf = KnnClassifier(k=1).fit(labeled, seed=0)
        assert np.array_equal(clf.train_x, labeled.features)
        assert np.array_equal(clf.train_y, labeled.labels)

    def test_query_on_training_point_returns_its_label(self):
        labeled, _, _ = _blobs((6, 6, 6))
        clf = KnnClassifier(k=1).fit(labeled, seed=0)
        for i in (0, 7, 17):
            label, scores = clf.predict(labeled.features[i])
            assert label == labeled.labels[i]
            assert scores[label] == 1.0

    def test_distance_tie_resolves_to_lower_class_index(self):
        # the two training points are equidistant from the query; the
        # tie rule (lower training index, then lower class index) picks
        # the class-0 point
        train = Dataset(np.array([[0.0, 1.0], [0.0, -1.0]]), np.array([0, 1]),
                        ("A", "B"))
        clf = KnnClassifier(k=1).fit(train, seed=0)
        label, _ = clf.predict(np.array([0.0, 0.0]))
        assert label == 0

    def test_vote_tie_at_k2_resolves_to_lower_class_index(self):
        train = Dataset(np.array([[0.0, 1.0], [0.0, -1.0]]), np.array([1, 0]),
                        ("A", "B"))
        clf = KnnClassifier(k=2).fit(train, seed=0)
        label, scores = clf.predict(np.array([0.0, 0.0]))
        assert list(scores) == [0.5, 0.5]
        assert label == 0

    def test_training_accuracy_is_one_on_distinct_points(self):
        labeled, _, _ = _blobs((20, 20, 20, 20), d=6, seed=1)
        clf = KnnClassifier(k=1).fit(labeled, seed=0)
        assert np.mean(clf.predict_labels(labeled.features) == labeled.labels) == 1.0

    def test_seed_independent(self):
        labeled, pool, _ = _blobs((10, 10), (20, 20), seed=2)
        a = KnnClassifier(k=1).fit(labeled, seed=0).predict_labels(pool.features)
        b = KnnClassifier(k=1).fit(labeled, seed=99).predict_labels(pool.features)
        assert np.array_equal(a, b)


def _nb_log_density_oracle(clf: GaussianNbClassifier, x: np.ndarray) -> int:
    """Scalar-loop Gaussian density evaluation, independent of the
    vectorized implementation."""
    best_cls, best = -1, -math.inf
    for cls in range(len(clf.class_names)):
        if not math.isfinite(clf.log_priors[cls]):
            continue
        total = clf.log_priors[cls]
        for j in range(x.size):
            mu = clf.means[cls][j]
            var = clf.variances[cls][j]
            total += -0.5 * math.log(2.0 * math.pi * var) - (x[j] - mu) ** 2 / (2.0 * var)
        if total > best:
            best_cls, best = cls, total
    return best_cls


class TestGaussianNb:
    def test_priors_match_class_frequencies(self):
        labeled, _, _ = _blobs((162, 50, 107, 177), d=4, seed=3)
        clf = GaussianNbClassifier().fit(labeled, seed=0)
        assert np.allclose(clf.priors, [0.327, 0.101, 0.216, 0.357], atol=1e-3)

    def test_predictions_match_brute_force_density_oracle(self):
        labeled, pool, _ = _blobs((30, 30, 30, 30), (50, 50, 50, 50), d=4, seed=4)
        clf = GaussianNbClassifier().fit(labeled, seed=0)
        preds = clf.predict_labels(pool.features)
        oracle = np.array([_nb_log_density_oracle(clf, x) for x in pool.features])
        assert np.array_equal(preds, oracle)

    def test_scores_are_valid_posteriors(self):
        labeled, pool, _ = _blobs((15, 15, 15), (30, 30, 30), seed=5)
        clf = GaussianNbClassifier().fit(labeled, seed=0)
        scores = clf.scores_batch(pool.features)
        assert np.all(scores >= 0.0)
        assert np.max(np.abs(scores.sum(axis=1) - 1.0)) < 1e-9

    def test_constant_feature_survives_via_variance_floor(self):
        X = np.column_stack([np.ones(10), np.arange(10, dtype=float)])
        ds = Dataset(X, np.array([0] * 5 + [1] * 5), ("A", "B"))
        clf = GaussianNbClassifier().fit(ds, seed=0)
        assert np.all(clf.variances >= clf.VAR_FLOOR)
        assert np.all(np.isfinite(clf.scores_batch(X)))

    def test_seed_independent(self):
        labeled, _, _ = _blobs((10, 10, 10), seed=21)
        a = GaussianNbClassifier().fit(labeled, seed=0)
        b = GaussianNbClassifier().fit(labeled, seed=99)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.variances, b.variances)
        assert np.array_equal(a.log_priors, b.log_priors)


class TestLda:
    def test_boundary_matches_midpoint_hyperplane_oracle(self):
        labeled, pool, _ = _blobs((40, 40), (60, 60), d=3, seed=6,
                                  class_names=("A", "B"))
        clf = LdaClassifier().fit(labeled, seed=0)
        # closed-form two-class rule computed independently from the same
        # sample statistics: (x - midpoint)' Sigma^-1 (mu1 - mu0) + log-prior gap
        mu0 = labeled.features[labeled.labels == 0].mean(axis=0)
        mu1 = labeled.features[labeled.labels == 1].mean(axis=0)
        c0 = labeled.features[labeled.labels == 0] - mu0
        c1 = labeled.features[labeled.labels == 1] - mu1
        cov = (c0.T @ c0 + c1.T @ c1) / (labeled.n - 2)
        cov[np.diag_indices(3)] += LdaClassifier.RIDGE * np.trace(cov) / 3
        direction = np.linalg.solve(cov, mu1 - mu0)
        midpoint = 0.5 * (mu0 + mu1)
        oracle = (pool.features - midpoint) @ direction  # equal priors: no offset
        disc = clf.discriminants(pool.features)
        assert np.max(np.abs((disc[:, 1] - disc[:, 0]) - oracle)) < 1e-6

    def test_spherical_gaussians_predicted_by_nearest_mean(self):
        labeled, pool, truth = _blobs((50, 50), (80, 80), d=4, seed=7,
                                      class_names=("A", "B"))
        clf = LdaClassifier().fit(labeled, seed=0)
        assert np.mean(clf.predict_labels(pool.features) == truth) >= 0.99

    def test_scores_are_valid_posteriors(self):
        labeled, pool, _ = _blobs((20, 20, 20), (20, 20, 20), seed=8)
        clf = LdaClassifier().fit(labeled, seed=0)
        scores = clf.scores_batch(pool.features)
        assert np.all(scores >= 0.0)
        assert np.max(np.abs(scores.sum(axis=1) - 1.0)) < 1e-9

    def test_degenerate_covariance_rejected(self):
        ds = Dataset(np.zeros((8, 3)), np.array([0] * 4 + [1] * 4), ("A", "B"))
        with pytest.raises(ValueError, match="singular"):
            LdaClassifier().fit(ds, seed=0)


class TestLinearSvm:
    def test_separable_data_reaches_perfect_training_accuracy(self):
        labeled, _, _ = _blobs((25, 25), d=3, seed=9, class_names=("A", "B"))
        ds = normalize(labeled)[0]
        clf = LinearSvmClassifier().fit(ds, seed=0)
        assert np.mean(clf.predict_labels(ds.features) == ds.labels) == 1.0

    def test_four_class_one_vs_rest(self):
        labeled, pool, truth = _blobs((20, 20, 20, 20), (30, 30, 30, 30), seed=10)
        clf = LinearSvmClassifier().fit(labeled, seed=1)
        assert np.mean(clf.predict_labels(pool.features) == truth) >= 0.95

    def test_deterministic_given_seed(self):
        labeled, _, _ = _blobs((15, 15), seed=11, class_names=("A", "B"))
        a = LinearSvmClassifier().fit(labeled, seed=5)
        b = LinearSvmClassifier().fit(labeled, seed=5)
        assert np.array_equal(a.weights, b.weights)


class TestBaggedTrees:
    def test_single_unlimited_tree_fits_distinct_points_exactly(self):
        labeled, _, _ = _blobs((12, 12, 12, 12), d=4, seed=12, separation=1.0)
        clf = BaggedTreesClassifier(n_trees=1, max_depth=None).fit(labeled, seed=0)
        assert np.mean(clf.predict_labels(labeled.features) == labeled.labels) == 1.0

    def test_xor_needs_zero_gain_splits(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1, 1, 0])
        ds = Dataset(X, y, ("A", "B"))
        clf = BaggedTreesClassifier(n_trees=1, max_depth=None).fit(ds, seed=0)
        assert np.array_equal(clf.predict_labels(X), y)

    def test_depth_limit_is_honoured(self):
        labeled, _, _ = _blobs((30, 30), d=3, seed=13, class_names=("A", "B"),
                               separation=0.5)
        clf = BaggedTreesClassifier(n_trees=3, max_depth=2).fit(labeled, seed=0)
        assert all(t.depth <= 2 for t in clf.trees)

    def test_ensemble_deterministic_given_seed(self):
        labeled, pool, _ = _blobs((15, 15, 15), (20, 20, 20), seed=14)
        a = BaggedTreesClassifier(n_trees=5).fit(labeled, seed=3).predict_labels(pool.features)
        b = BaggedTreesClassifier(n_trees=5).fit(labeled, seed=3).predict_labels(pool.features)
        assert np.array_equal(a, b)

    def test_scores_are_vote_fractions(self):
        labeled, pool, _ = _blobs((10, 10), (5, 5), seed=15, class_names=("A", "B"))
        clf = BaggedTreesClassifier(n_trees=4).fit(labeled, seed=0)
        scores = clf.scores_batch(pool.features)
        assert np.allclose(scores.sum(axis=1), 1.0)
        assert np.all((scores * 4) % 1 == 0)


class TestCommonSurface:
    def test_classify_all_counts_sum_to_pool_size(self):
        labeled, pool, _ = _blobs((10, 10, 10, 10), (25, 25, 25, 25), seed=16)
        for kind in ("knn", "naive_bayes", "discriminant_analysis", "svm", "ensemble"):
            clf = fit_baseline(kind, labeled, seed=0)
            labels, counts = classify_all(clf, pool)
            assert counts.sum() == pool.n
            assert labels.size == pool.n

    def test_classify_all_empty_pool(self):
        labeled, _, _ = _blobs((5, 5), class_names=("A", "B"), seed=17)
        empty = Dataset(np.zeros((0, 5)), np.zeros(0, dtype=int), ("A", "B"))
        clf = fit_baseline("knn", labeled, seed=0)
        labels, counts = classify_all(clf, empty)
        assert labels.size == 0
        assert list(counts) == [0, 0]

    def test_single_class_training_predicts_that_class(self):
        rng = np.random.default_rng(18)
        ds = Dataset(rng.normal(0, 1, (10, 3)), np.full(10, 2), CLASSES)
        pool = Dataset(rng.normal(0, 1, (20, 3)),
                       np.full(20, -1, dtype=np.int64), CLASSES)
        for kind in ("knn", "naive_bayes", "ensemble", "svm"):
            clf = fit_baseline(kind, ds, seed=0)
            labels, counts = classify_all(clf, pool)
            assert np.all(labels == 2), kind

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            make_baseline("boosting")

    def test_prediction_dimension_mismatch(self):
        labeled, _, _ = _blobs((5, 5), class_names=("A", "B"), seed=19)
        clf = fit_baseline("knn", labeled, seed=0)
        with pytest.raises(ValueError):
            clf.predict_labels(np.ones((3, 7)))

    @pytest.mark.parametrize("kind", ["knn", "naive_bayes", "discriminant_analysis",
                                      "svm", "ensemble"])
    def test_model_json_round_trip(self, kind):
        labeled, pool, _ = _blobs((10, 10, 10), (15, 15, 15), seed=20)
        clf = fit_baseline(kind, labeled, seed=0)
        back = load_model_json(save_model_json(clf))
        assert np.array_equal(back.predict_labels(pool.features),
                              clf.predict_labels(pool.features))
