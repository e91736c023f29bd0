"""Dataset model, CSV round trips, normalization and splitting."""

import numpy as np
import pytest

from wellclass.data import (
    CsvSchema,
    Dataset,
    NormParams,
    UNLABELED,
    apply_norm,
    concat,
    fit_norm,
    load_csv,
    normalize,
    oversample_balance,
    save_csv,
    stratified_kfold,
    stratified_kfold_indices,
)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_single_labelled_row(self, tmp_path):
        header = ",".join(f"f{i}" for i in range(1, 18)) + ",label"
        row = ",".join(["1.0"] * 16 + ["2.0"]) + ",O"
        ds = load_csv(_write(tmp_path, "one.csv", f"{header}\n{row}\n"))
        assert ds.n == 1 and ds.d == 17
        assert ds.labels[0] == 3  # O
        assert ds.features[0, 16] == 2.0

    def test_ragged_row_names_the_row(self, tmp_path):
        header = ",".join(f"f{i}" for i in range(1, 18)) + ",label"
        good = ",".join(["0.5"] * 17) + ",D"
        bad = ",".join(["0.5"] * 16) + ",D"  # 16 features under a 17-wide schema
        path = _write(tmp_path, "ragged.csv", f"{header}\n{good}\n{bad}\n")
        with pytest.raises(ValueError, match="row 3"):
            load_csv(path)

    def test_well_log_shaped_file(self, tmp_path):
        rng = np.random.default_rng(0)
        lines = [",".join(f"a{i}" for i in range(17)) + ",label"]
        for cls in ("D", "W", "I", "O"):
            for _ in range(3):
                lines.append(",".join(repr(float(v)) for v in rng.uniform(0, 1, 17)) + f",{cls}")
        ds = load_csv(_write(tmp_path, "well.csv", "\n".join(lines) + "\n"))
        assert ds.d == 17 and ds.n_classes == 4
        assert list(ds.class_counts()) == [3, 3, 3, 3]

    def test_unlabelled_rows_and_mixed(self, tmp_path):
        text = "x,y,label\n1,2,D\n3,4,\n5,6,W\n"
        ds = load_csv(_write(tmp_path, "mix.csv", text))
        assert list(ds.labels) == [0, UNLABELED, 1]
        assert ds.labeled_subset().n == 2
        assert ds.unlabeled_subset().n == 1

    def test_non_numeric_field_reports_row_and_column(self, tmp_path):
        path = _write(tmp_path, "bad.csv", "x,y,label\n1,oops,D\n")
        with pytest.raises(ValueError, match="row 2.*'y'"):
            load_csv(path)

    def test_unknown_label_token(self, tmp_path):
        path = _write(tmp_path, "tok.csv", "x,y,label\n1,2,Q\n")
        with pytest.raises(ValueError, match="unknown label token 'Q'"):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv")

    def test_schema_without_label_column_reads_all_as_features(self, tmp_path):
        path = _write(tmp_path, "plain.csv", "x,y,label\n1,2,3\n")
        ds = load_csv(path, CsvSchema(label_column=None))
        assert ds.d == 3  # "label" is just another numeric column here
        assert ds.labels[0] == UNLABELED

    def test_schema_declared_width_is_enforced(self, tmp_path):
        path = _write(tmp_path, "narrow.csv", "x,y,label\n1,2,D\n")
        with pytest.raises(ValueError, match="expected 17 feature columns"):
            load_csv(path, CsvSchema(d=17))

    def test_round_trip_is_identity(self, tmp_path):
        rng = np.random.default_rng(7)
        ds = Dataset(rng.normal(0, 3, (20, 5)),
                     rng.integers(-1, 4, 20), ("D", "W", "I", "O"))
        save_csv(ds, tmp_path / "rt.csv")
        back = load_csv(tmp_path / "rt.csv")
        assert np.array_equal(back.features, ds.features)  # bit-exact floats
        assert np.array_equal(back.labels, ds.labels)
        assert back.feature_names == ds.feature_names


class TestDatasetInvariants:
    def test_rejects_non_finite_features(self):
        with pytest.raises(ValueError, match="NaN or Inf"):
            Dataset(np.array([[1.0, np.nan]]), np.array([0]), ("A", "B"))

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ValueError, match="label index out of range"):
            Dataset(np.ones((1, 2)), np.array([5]), ("A", "B"))

    def test_labelled_and_unlabelled_partition(self):
        ds = Dataset(np.ones((4, 2)), np.array([0, UNLABELED, 1, UNLABELED]), ("A", "B"))
        assert ds.labeled_subset().n + ds.unlabeled_subset().n == ds.n

    def test_arrays_are_read_only(self):
        ds = Dataset(np.ones((2, 2)), np.array([0, 1]), ("A", "B"))
        with pytest.raises(ValueError):
            ds.features[0, 0] = 9.0

    def test_concat_requires_matching_schema(self):
        a = Dataset(np.ones((2, 2)), np.array([0, 1]), ("A", "B"))
        b = Dataset(np.ones((2, 3)), np.array([0, 1]), ("A", "B"))
        with pytest.raises(ValueError):
            concat([a, b])


class TestNormalize:
    def test_minmax_endpoints(self):
        ds = Dataset(np.array([[2.0], [4.0], [6.0]]), np.array([0, 0, 1]), ("A", "B"))
        out, _ = normalize(ds)
        assert np.allclose(out.features[:, 0], [0.0, 0.5, 1.0])

    def test_constant_column_maps_to_zero_with_warning(self):
        ds = Dataset(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]),
                     np.array([0, 0, 1]), ("A", "B"))
        with pytest.warns(UserWarning, match="constant feature"):
            out, params = normalize(ds)
        assert np.all(out.features[:, 0] == 0.0)
        assert list(params.constant_features) == [0]

    def test_random_matrix_column_ranges(self):
        rng = np.random.default_rng(3)
        raw = rng.normal(0, 5, (10, 3))
        ds = Dataset(raw, np.zeros(10, dtype=int), ("A",))
        out, params = normalize(ds)
        # independent recomputation of the per-column min/max mapping
        expect = (raw - raw.min(axis=0)) / (raw.max(axis=0) - raw.min(axis=0))
        assert np.allclose(out.features, expect, atol=1e-15)
        assert np.allclose(out.features.min(axis=0), 0.0)
        assert np.allclose(out.features.max(axis=0), 1.0)

    def test_reapplying_params_reproduces_output(self):
        rng = np.random.default_rng(4)
        ds = Dataset(rng.normal(2, 3, (30, 4)), np.zeros(30, dtype=int), ("A",))
        out, params = normalize(ds)
        again = apply_norm(params, ds)
        assert np.max(np.abs(again.features - out.features)) < 1e-12

    def test_zscore_switch(self):
        rng = np.random.default_rng(5)
        raw = rng.normal(10, 2, (50, 3))
        ds = Dataset(raw, np.zeros(50, dtype=int), ("A",))
        out, params = normalize(ds, method="zscore")
        assert params.method == "zscore"
        assert np.allclose(out.features.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(out.features.std(axis=0), 1.0, atol=1e-12)

    def test_params_json_round_trip(self):
        params = NormParams(np.array([0.0, 1.0]), np.array([2.0, 1.5]))
        back = NormParams.from_json(params.to_json())
        assert np.array_equal(back.lo, params.lo)
        assert np.array_equal(back.hi, params.hi)

    def test_empty_dataset_rejected(self):
        ds = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), ("A",))
        with pytest.raises(ValueError):
            fit_norm(ds)


def _toy(counts, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.full(n, i) for i, n in enumerate(counts)])
    feats = rng.normal(0, 1, (labels.size, 3))
    names = tuple("DWIO"[:len(counts)])
    return Dataset(feats, labels, names)


class TestStratifiedKfold:
    def test_perfectly_divisible(self):
        ds = _toy((5, 5))
        folds = stratified_kfold(ds, 5, seed=0)
        for _, test in folds:
            assert list(test.class_counts()) == [1, 1]

    def test_well_log_counts_give_even_minority_folds(self):
        ds = _toy((162, 50, 107, 177))
        folds = stratified_kfold(ds, 5, seed=1)
        for _, test in folds:
            assert test.class_counts()[1] == 10  # 50 W samples over 5 folds

    def test_deterministic_in_seed(self):
        ds = _toy((9, 7, 8))
        a = stratified_kfold_indices(ds.labels, 4, seed=3)
        b = stratified_kfold_indices(ds.labels, 4, seed=3)
        c = stratified_kfold_indices(ds.labels, 4, seed=4)
        assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
        assert any(not np.array_equal(x[1], y[1]) for x, y in zip(a, c))

    def test_partition_property(self):
        ds = _toy((11, 13, 9))
        for k in (2, 3, 5):
            for seed in (0, 1, 2):
                folds = stratified_kfold_indices(ds.labels, k, seed)
                all_test = np.concatenate([te for _, te in folds])
                assert np.array_equal(np.sort(all_test), np.arange(ds.n))
                for tr, te in folds:
                    assert np.intersect1d(tr, te).size == 0
                    assert tr.size + te.size == ds.n
                    per_class = [np.bincount(ds.labels[te], minlength=3)
                                 for _, te in folds]
                counts = np.stack(per_class)
                assert np.all(counts.max(axis=0) - counts.min(axis=0) <= 1)

    def test_leave_one_out_supported(self):
        ds = _toy((4, 4))
        folds = stratified_kfold_indices(ds.labels, 8, seed=0)
        assert all(te.size == 1 for _, te in folds)

    def test_unlabelled_rejected(self):
        ds = Dataset(np.ones((4, 2)), np.array([0, 1, UNLABELED, 1]), ("A", "B"))
        with pytest.raises(ValueError, match="labelled"):
            stratified_kfold_indices(ds.labels, 2, 0)

    def test_k_larger_than_dataset_rejected(self):
        ds = _toy((3, 3))
        with pytest.raises(ValueError, match="exceeds"):
            stratified_kfold_indices(ds.labels, 7, 0)


class TestOversampleBalance:
    def test_already_balanced_is_unchanged(self):
        ds = _toy((3, 3, 3, 3))
        out = oversample_balance(ds, seed=0)
        assert out.n == ds.n
        assert np.array_equal(out.features, ds.features)

    def test_well_log_counts_reach_majority(self):
        ds = _toy((162, 50, 107, 177))
        out = oversample_balance(ds, seed=5)
        assert list(out.class_counts()) == [177, 177, 177, 177]

    def test_originals_retained_and_unchanged(self):
        ds = _toy((4, 9, 2))
        out = oversample_balance(ds, seed=2)
        assert np.array_equal(out.features[:ds.n], ds.features)
        assert np.array_equal(out.labels[:ds.n], ds.labels)

    def test_duplicates_are_copies_of_originals(self):
        ds = _toy((4, 9, 2))
        out = oversample_balance(ds, seed=2)
        originals = {tuple(row) for row in ds.features}
        for row in out.features[ds.n:]:
            assert tuple(row) in originals

    def test_empty_class_rejected(self):
        ds = Dataset(np.ones((2, 2)), np.array([0, 0]), ("A", "B"))
        with pytest.raises(ValueError, match="'B'"):
            oversample_balance(ds, seed=0)

    def test_deterministic(self):
        ds = _toy((5, 12))
        a = oversample_balance(ds, seed=9)
        b = oversample_balance(ds, seed=9)
        assert np.array_equal(a.features, b.features)
