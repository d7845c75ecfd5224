import numpy as np
import pytest

from formgate import Dataset, load_csv, load_dataset, save_dataset, split_and_standardize
from formgate.rng import substream


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_missing_cells_dropped_and_counted(tmp_path):
    p = write(tmp_path, "a,b,y\n1,2,3\n4,,6\n7,8,9\n")
    ds = load_csv(p, "y")
    assert ds.n == 2
    assert ds.dropped_rows == 1
    np.testing.assert_array_equal(ds.X, [[1, 2], [7, 8]])


def test_binary_label_mapping(tmp_path):
    p = write(tmp_path, "a,y\n1,yes\n2,no\n3,yes\n")
    ds = load_csv(p, "y", task_kind="classification")
    assert ds.label_mapping == {"no": 0, "yes": 1}
    np.testing.assert_array_equal(ds.y, [1, 0, 1])
    assert ds.task == "binary"


def test_non_numeric_feature_cell_errors_with_location(tmp_path):
    p = write(tmp_path, "a,b,y\n1,2,3\n1,oops,3\n")
    with pytest.raises(ValueError, match="row 3.*'b'"):
        load_csv(p, "y")


def test_missing_target_column(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(ValueError, match="target"):
        load_csv(p, "z")


def test_split_sizes_8_1_1():
    rng = substream(0, "split-test")
    ds = Dataset(rng.normal(size=(10, 3)), rng.normal(size=10))
    train, val, test = split_and_standardize(ds, (0.8, 0.1, 0.1), seed=1)
    assert (train.n, val.n, test.n) == (8, 1, 1)


def test_train_split_standardized_to_unit():
    rng = substream(1, "std")
    ds = Dataset(rng.normal(3.0, 2.5, size=(200, 4)), rng.normal(10, 5, size=200))
    train, val, test = split_and_standardize(ds, (0.8, 0.1, 0.1), seed=2)
    np.testing.assert_allclose(train.X.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(train.X.std(axis=0), 1.0, atol=1e-10)
    assert abs(train.y.mean()) < 1e-10
    assert abs(train.y.var() - 1.0) < 1e-10


def test_val_test_use_train_statistics_only():
    rng = substream(2, "leak")
    ds = Dataset(rng.normal(size=(100, 2)), rng.normal(size=100))
    train, val, test = split_and_standardize(ds, (0.6, 0.2, 0.2), seed=3)
    assert train.stats is val.stats is test.stats
    # reconstruct the raw validation rows from train stats alone
    raw = val.X * train.stats.x_std + train.stats.x_mean
    assert np.all(np.isin(np.round(raw, 10), np.round(ds.X, 10)))


def test_same_seed_same_permutation():
    rng = substream(3, "det")
    ds = Dataset(rng.normal(size=(50, 2)), rng.normal(size=50))
    a = split_and_standardize(ds, (0.8, 0.1, 0.1), seed=9)
    b = split_and_standardize(ds, (0.8, 0.1, 0.1), seed=9)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.X, y.X)
        np.testing.assert_array_equal(x.y, y.y)


def test_zero_val_fraction_allowed():
    rng = substream(4, "noval")
    ds = Dataset(rng.normal(size=(20, 2)), rng.normal(size=20))
    train, val, test = split_and_standardize(ds, (0.8, 0.0, 0.2), seed=0)
    assert val.n == 0 and train.n == 16 and test.n == 4


def test_tiny_positive_fraction_errors():
    rng = substream(5, "tiny")
    ds = Dataset(rng.normal(size=(10, 2)), rng.normal(size=10))
    with pytest.raises(ValueError):
        split_and_standardize(ds, (0.95, 0.01, 0.04), seed=0)


def test_constant_feature_dropped_with_warning():
    rng = substream(6, "const")
    X = rng.normal(size=(30, 3))
    X[:, 1] = 5.0
    ds = Dataset(X, rng.normal(size=30), feature_names=("a", "b", "c"))
    with pytest.warns(UserWarning, match="constant"):
        train, _, _ = split_and_standardize(ds, (0.8, 0.1, 0.1), seed=0)
    assert train.d == 2
    assert train.feature_names == ("a", "c")


def test_dataset_round_trip_bit_exact(tmp_path):
    rng = substream(7, "rt")
    ds = Dataset(rng.normal(size=(13, 3)), rng.normal(size=13))
    save_dataset(ds, tmp_path / "cache")
    back = load_dataset(tmp_path / "cache")
    assert np.array_equal(ds.X, back.X)
    assert np.array_equal(ds.y, back.y)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 1.0]]), np.array([0.0]))
