import numpy as np
import pytest

from tiltshift.dataset import (
    CsvSchema,
    Dataset,
    ParseError,
    SchemaError,
    assign_folds,
    delta_to_raw_scale,
    destandardize,
    load_csv,
    standardize,
)


@pytest.fixture
def schema():
    return CsvSchema(covariates=("x1", "x2"), exposures=("w1",), outcome="y")


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_three_rows(self, tmp_path, schema):
        path = write(tmp_path, "x1,x2,w1,y\n1,2,3,4\n5,6,7,8\n9,10,11,12\n")
        d = load_csv(path, schema)
        assert d.n == 3 and d.p == 2 and d.q == 1
        np.testing.assert_allclose(d.X[0], [1.0, 2.0])
        np.testing.assert_allclose(d.W[:, 0], [3.0, 7.0, 11.0])
        np.testing.assert_allclose(d.Y, [4.0, 8.0, 12.0])

    def test_header_only(self, tmp_path, schema):
        path = write(tmp_path, "x1,x2,w1,y\n")
        with pytest.raises(ParseError, match="empty data"):
            load_csv(path, schema)

    def test_nan_cell_rejected_with_row(self, tmp_path, schema):
        path = write(tmp_path, "x1,x2,w1,y\n1,2,3,4\n1,nan,3,4\n5,6,7,8\n")
        with pytest.raises(ParseError, match="line 3"):
            load_csv(path, schema)

    def test_nan_cell_dropped(self, tmp_path, schema):
        path = write(tmp_path, "x1,x2,w1,y\n1,2,3,4\n1,nan,3,4\n5,6,7,8\n")
        d = load_csv(path, schema, non_finite="drop")
        assert d.n == 2

    def test_missing_column(self, tmp_path, schema):
        path = write(tmp_path, "x1,x2,y\n1,2,3\n")
        with pytest.raises(SchemaError, match="w1"):
            load_csv(path, schema)

    def test_non_numeric_cell_located(self, tmp_path, schema):
        path = write(tmp_path, "x1,x2,w1,y\n1,2,3,4\n1,abc,3,4\n")
        with pytest.raises(ParseError, match=r"line 3.*x2"):
            load_csv(path, schema)

    def test_row_order_preserved(self, tmp_path, schema):
        path = write(tmp_path, "x1,x2,w1,y\n9,9,9,1\n1,1,1,2\n5,5,5,3\n")
        d = load_csv(path, schema)
        np.testing.assert_allclose(d.Y, [1.0, 2.0, 3.0])

    def test_custom_delimiter(self, tmp_path):
        schema = CsvSchema(covariates=("a",), exposures=("b",), outcome="c",
                           delimiter=";")
        path = write(tmp_path, "a;b;c\n1;2;3\n4;5;6\n")
        d = load_csv(path, schema)
        assert d.n == 2

    def test_overlapping_roles_rejected(self):
        with pytest.raises(SchemaError):
            CsvSchema(covariates=("a",), exposures=("a",), outcome="y")


class TestStandardize:
    def test_hand_computed_column(self):
        d = Dataset(X=np.array([[1.0], [2.0], [3.0]]),
                    W=np.array([[10.0], [20.0], [30.0]]),
                    Y=np.array([1.0, 2.0, 3.0]))
        s = standardize(d)
        np.testing.assert_allclose(s.X[:, 0], [-1.0, 0.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(s.Y, d.Y)  # outcome untouched

    def test_unit_moments(self):
        rng = np.random.default_rng(0)
        d = Dataset(X=rng.normal(3, 2, (50, 3)), W=rng.normal(-1, 5, (50, 2)),
                    Y=rng.normal(size=50))
        s = standardize(d)
        for M in (s.X, s.W):
            np.testing.assert_allclose(M.mean(axis=0), 0.0, atol=1e-10)
            np.testing.assert_allclose(M.std(axis=0, ddof=1), 1.0, atol=1e-10)

    def test_idempotent_on_standardized(self):
        rng = np.random.default_rng(1)
        d = Dataset(X=rng.normal(size=(40, 2)), W=rng.normal(size=(40, 2)),
                    Y=rng.normal(size=40))
        once = standardize(d)
        again = standardize(Dataset(X=once.X, W=once.W, Y=once.Y))
        np.testing.assert_allclose(again.X, once.X, atol=1e-10)
        np.testing.assert_allclose(again.W, once.W, atol=1e-10)

    def test_constant_column_named(self):
        d = Dataset(X=np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]),
                    W=np.ones((3, 1)) * np.arange(3)[:, None],
                    Y=np.zeros(3), covariate_names=("a", "const"))
        with pytest.raises(ValueError, match="const"):
            standardize(d)

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        d = Dataset(X=rng.normal(4, 3, (30, 2)), W=rng.normal(0, 9, (30, 3)),
                    Y=rng.normal(size=30))
        back = destandardize(standardize(d))
        np.testing.assert_allclose(back.X, d.X, atol=1e-10)
        np.testing.assert_allclose(back.W, d.W, atol=1e-10)

    def test_delta_scale_map(self):
        rng = np.random.default_rng(3)
        d = Dataset(X=rng.normal(size=(30, 1)), W=rng.normal(0, 4, (30, 2)),
                    Y=rng.normal(size=30))
        s = standardize(d)
        delta_std = np.array([0.2, -0.1])
        delta_raw = delta_to_raw_scale(delta_std, s.standardization)
        # same tilt up to a W-free constant: the index difference is constant
        diff = s.W @ delta_std - d.W @ delta_raw
        assert np.ptp(diff) < 1e-10


class TestDatasetInvariants:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(X=np.array([[1.0], [np.inf]]), W=np.ones((2, 1)),
                    Y=np.zeros(2))

    def test_rejects_single_row(self):
        with pytest.raises(ValueError):
            Dataset(X=np.ones((1, 1)), W=np.ones((1, 1)), Y=np.zeros(1))

    def test_immutable(self):
        d = Dataset(X=np.ones((3, 1)), W=np.ones((3, 1)), Y=np.zeros(3))
        with pytest.raises(ValueError):
            d.X[0, 0] = 5.0


class TestFolds:
    def test_even_split(self):
        f = assign_folds(10, 5, seed=0)
        assert np.all(np.bincount(f.fold_of, minlength=5) == 2)

    def test_remainder_rule(self):
        f = assign_folds(11, 5, seed=0)
        sizes = sorted(np.bincount(f.fold_of, minlength=5))
        assert sizes == [2, 2, 2, 2, 3]

    def test_deterministic(self):
        a = assign_folds(37, 4, seed=123)
        b = assign_folds(37, 4, seed=123)
        assert np.array_equal(a.fold_of, b.fold_of)

    def test_seed_changes_assignment(self):
        a = assign_folds(37, 4, seed=1)
        b = assign_folds(37, 4, seed=2)
        assert not np.array_equal(a.fold_of, b.fold_of)

    def test_partition(self):
        f = assign_folds(23, 3, seed=5)
        all_idx = np.concatenate([f.indices(k) for k in range(3)])
        assert sorted(all_idx) == list(range(23))
        for k in range(3):
            assert set(f.indices(k)).isdisjoint(f.train_indices(k))

    def test_parameter_errors(self):
        with pytest.raises(ValueError):
            assign_folds(5, 6, seed=0)
        with pytest.raises(ValueError):
            assign_folds(5, 1, seed=0)
