import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spear.errors import DataError
from spear.tsmote import (LabeledDataset, balance, interpolate, k_nearest_minority, read_dataset,
                          write_dataset)


def ds_1d(points, labels=None):
    X = np.array(points, dtype=float).reshape(-1, 1)
    return LabeledDataset(X, np.ones(len(points), dtype=int) if labels is None else labels)


def with_majority(minority_points, n_major=10):
    X = np.array(list(minority_points) + [100.0 + i for i in range(n_major)]).reshape(-1, 1)
    y = np.r_[np.ones(len(minority_points), int), np.zeros(n_major, int)]
    return LabeledDataset(X, y)


def test_two_samples_are_mutual_neighbours():
    assert k_nearest_minority(with_majority([0.0, 3.0]), 1)[:, 0].tolist() == [1, 0]


def test_collinear_neighbours():
    assert k_nearest_minority(with_majority([0.0, 1.0, 10.0]), 1)[:, 0].tolist() == [1, 0, 1]


def test_tie_goes_to_lower_index():
    assert k_nearest_minority(with_majority([0.0, -1.0, 1.0]), 1)[0, 0] == 1


def test_knn_excludes_self_and_orders_by_distance(rng):
    X = rng.random((12, 4))
    y = np.r_[np.ones(6, int), np.zeros(6, int)]
    nbrs = k_nearest_minority(LabeledDataset(X, y), 5)
    for i, row in enumerate(nbrs):
        assert i not in row
        d = [np.linalg.norm(X[i] - X[j]) for j in row]
        assert d == sorted(d)


def test_knn_needs_two_minority():
    with pytest.raises(DataError, match="disable resampling"):
        k_nearest_minority(with_majority([0.0]), 1)


@pytest.mark.parametrize("k", [0, 3])
def test_knn_k_range(k):
    with pytest.raises(DataError):
        k_nearest_minority(with_majority([0.0, 1.0, 2.0]), k)


def test_interpolate_worked_example():
    x1, x2 = [4, 3, 4, 8, 7, 3], [3, 4, 4, 3, 7, 4]
    assert interpolate(x1, x2, 0.5).tolist() == [3.5, 3.5, 4, 5.5, 7, 3.5]
    assert interpolate(x1, x2, 0.0).tolist() == x1
    assert interpolate(x1, x2, 1.0).tolist() == x2


def test_interpolate_length_mismatch():
    with pytest.raises(DataError):
        interpolate([1, 2], [1, 2, 3], 0.5)


def test_balance_counts(rng):
    X = rng.random((100, 8))
    y = np.r_[np.zeros(90, int), np.ones(10, int)]
    out = balance(LabeledDataset(X, y), k=5, seed=1)
    assert out.class_counts == (90, 90)
    assert out.synthetic.sum() == 80 and np.all(out.y[out.synthetic] == 1)
    np.testing.assert_array_equal(out.X[:100], X)
    np.testing.assert_array_equal(out.y[:100], y)


def test_balance_minority_zero_label(rng):
    X = rng.random((20, 3))
    y = np.r_[np.zeros(4, int), np.ones(16, int)]
    out = balance(LabeledDataset(X, y), k=2, seed=0)
    assert out.class_counts == (16, 16) and np.all(out.y[out.synthetic] == 0)


def test_balance_already_balanced_is_identity(rng):
    ds = LabeledDataset(rng.random((6, 2)), [0, 1, 0, 1, 0, 1])
    assert balance(ds) is ds


def test_balance_errors():
    with pytest.raises(DataError):
        balance(LabeledDataset(np.zeros((3, 2)), [0, 0, 0]))
    with pytest.raises(DataError, match="disable resampling"):
        balance(with_majority([0.0]))


def test_balance_clamps_k_to_minority():
    out = balance(with_majority([0.0, 1.0, 2.0], n_major=8), k=5, seed=3)
    assert out.class_counts == (8, 8)


def test_balance_deterministic(rng, tmp_path):
    X = rng.random((40, 5))
    y = (rng.random(40) < 0.2).astype(int)
    y[:2] = 1
    a, b = balance(LabeledDataset(X, y), 3, seed=9), balance(LabeledDataset(X, y), 3, seed=9)
    write_dataset(tmp_path / "a.csv", a)
    write_dataset(tmp_path / "b.csv", b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.parents == b.parents
    c = balance(LabeledDataset(X, y), 3, seed=10)
    assert not np.array_equal(a.X, c.X)


@settings(max_examples=40)
@given(st.integers(2, 8), st.integers(1, 20), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_synthetic_between_parents(n_minor, extra, L, seed):
    rng = np.random.default_rng(seed)
    n_major = n_minor + extra
    X = rng.normal(size=(n_minor + n_major, L))
    y = np.r_[np.ones(n_minor, int), np.zeros(n_major, int)]
    out = balance(LabeledDataset(X, y), k=5, seed=seed)
    assert out.class_counts == (n_major, n_major)
    for row, (i, j) in out.parents.items():
        lo, hi = np.minimum(X[i], X[j]), np.maximum(X[i], X[j])
        assert y[i] == y[j] == 1
        assert np.all(out.X[row] >= lo - 1e-12) and np.all(out.X[row] <= hi + 1e-12)


def test_dataset_round_trip(tmp_path, rng):
    ds = LabeledDataset(rng.random((4, 3)), [0, 1, 1, 0], [False, False, True, False],
                        ["a", "b", "c", "d"], ["s1", "s1", "synthetic", "s2"],
                        ["", "SuddenShift", "", ""])
    write_dataset(tmp_path / "d.csv", ds)
    got = read_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(got.X, ds.X)
    assert got.y.tolist() == [0, 1, 1, 0] and got.synthetic.tolist() == [False, False, True, False]
    assert (got.ids, got.sources, got.kinds) == (ds.ids, ds.sources, ds.kinds)


def test_dataset_read_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n")
    with pytest.raises(DataError, match="not a window dataset"):
        read_dataset(p)
    p.write_text("window_id,source_id,label,synthetic,kind,x0\nw,s,1,0,,0.5\nw,s,1,0,\n")
    with pytest.raises(DataError, match=":3"):
        read_dataset(p)


def test_dataset_rejects_bad_labels():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 2)), [0, 2])
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((3, 2)), [0, 1])
