import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from ganids.data import (BINARY_CODEC, MULTICLASS_CODEC, Dataset, Preprocessor, apply_standard_scaler, drop_missing,
                         encode_labels_binary, encode_labels_multiclass, fit_standard_scaler, load_csv,
                         load_dataset_csv, load_sidecar, one_hot_decode, one_hot_encode, pearson_r,
                         save_dataset_csv, save_sidecar, select_features_pearson, stratified_split_indices,
                         train_val_split)
from ganids.errors import DataError, EncodingError, IngestionError, LabelError, ParameterError, SelectionError

# Per-label instance counts of the raw Hogzilla export.
HOGZILLA_COUNTS = {"Acceptable": 2523, "Safe": 106, "Fun": 10, "Unrated": 5647, "Unsafe": 4546}


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# ---------------------------------------------------------------- ingestion

def test_load_small_numeric_file(tmp_path):
    raw = load_csv(write(tmp_path, "a,b,label\n1,2,Safe\n3,4,Fun\n5,6,Unsafe\n"))
    assert raw.n_rows == 3
    assert [c.kind for c in raw.schema] == ["numeric", "numeric", "label"]


def test_ragged_row_names_line(tmp_path):
    with pytest.raises(IngestionError, match="row 3"):
        load_csv(write(tmp_path, "a,b,label\n1,2,Safe\n3,Fun\n"))


def test_missing_label_column(tmp_path):
    with pytest.raises(IngestionError, match="label"):
        load_csv(write(tmp_path, "a,b\n1,2\n"))


def test_missing_file(tmp_path):
    with pytest.raises(IngestionError):
        load_csv(tmp_path / "nope.csv")


def test_categorical_inference_is_lexicographic(tmp_path):
    raw = load_csv(write(tmp_path, "proto,label\nudp,Safe\ntcp,Fun\nicmp,Safe\n"))
    assert raw.schema[0].kind == "categorical"
    assert raw.schema[0].categories == ("icmp", "tcp", "udp")


def test_drop_missing(tmp_path):
    raw = load_csv(write(tmp_path, "a,label\n1,Safe\n2,Fun\n3,Safe\n4,Fun\n5,Safe\n"))
    same = drop_missing(raw)
    assert same.n_rows == 5 and same.dropped == 0
    raw = load_csv(write(tmp_path, "a,label\n1,Safe\n,Fun\n3,Safe\n4,Fun\n5,Safe\n"))
    assert raw.missing["a"] == 1
    out = drop_missing(raw)
    assert out.n_rows == 4 and out.dropped == 1
    raw = load_csv(write(tmp_path, "a,label\n,Safe\n,Fun\n"))
    with pytest.raises(DataError):
        drop_missing(raw)


# ---------------------------------------------------------------- one-hot

def test_one_hot_examples():
    np.testing.assert_array_equal(one_hot_encode(["udp"], ["icmp", "tcp", "udp"]), [[0, 0, 1]])
    np.testing.assert_array_equal(one_hot_encode(["x", "x"], ["x"]), [[1], [1]])
    with pytest.raises(EncodingError):
        one_hot_encode(["sctp"], ["icmp", "tcp", "udp"])


@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=30))
def test_one_hot_rows_sum_to_one_and_round_trip(values):
    cats = sorted(set(values))
    m = one_hot_encode(values, cats)
    assert np.all(m.sum(axis=1) == 1)
    assert one_hot_decode(m, cats) == values


# ---------------------------------------------------------------- scaler

def test_scaler_hand_example():
    X = np.array([[1.0], [2.0], [3.0]])
    p = fit_standard_scaler(X)
    assert p.mean[0] == 2.0
    assert p.std[0] == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    s = math.sqrt(1.5)  # 1 / sqrt(2/3)
    np.testing.assert_allclose(apply_standard_scaler(X, p)[:, 0], [-s, 0, s], atol=1e-15)


def test_scaler_constant_column_zeroed():
    X = np.array([[5.0], [5.0], [5.0]])
    np.testing.assert_array_equal(apply_standard_scaler(X, fit_standard_scaler(X)), 0.0)


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 5)), elements=st.floats(-1e3, 1e3)))
def test_scaler_postconditions(X):
    Z = apply_standard_scaler(X, fit_standard_scaler(X))
    # columns whose spread is at rounding level are excluded from the unit-std claim
    live = X.std(axis=0) > 1e-6 * (1 + np.abs(X).max(axis=0))
    np.testing.assert_allclose(Z.mean(axis=0)[live], 0.0, atol=1e-9)
    np.testing.assert_allclose(Z.std(axis=0)[live], 1.0, atol=1e-9)


# ---------------------------------------------------------------- labels

def test_multiclass_mapping():
    np.testing.assert_array_equal(encode_labels_multiclass(["Safe", "Fun", "Unsafe", "acceptable ", "UNRATED"]),
                                  [0, 1, 2, 0, 1])
    with pytest.raises(LabelError, match="Botnet"):
        encode_labels_multiclass(["Botnet"])


def test_binary_mapping():
    np.testing.assert_array_equal(encode_labels_binary(["Acceptable", "Unrated", "Fun", "Safe", "Unsafe"]),
                                  [0, 1, 1, 0, 1])
    np.testing.assert_array_equal(encode_labels_binary(["Safe", "Acceptable"] * 3), 0)


def test_hogzilla_regrouped_counts():
    raw = [lab for lab, n in HOGZILLA_COUNTS.items() for _ in range(n)]
    assert len(raw) == 12832
    assert np.bincount(encode_labels_multiclass(raw)).tolist() == [2629, 5657, 4546]
    assert np.bincount(encode_labels_binary(raw)).tolist() == [2629, 10203]


# ---------------------------------------------------------------- pearson

def test_pearson_planted_columns():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, 1000)
    X = np.column_stack([y, -y, rng.standard_normal(1000)])
    r = pearson_r(X, y)
    assert r[0] == pytest.approx(1.0, abs=1e-12) and r[1] == pytest.approx(-1.0, abs=1e-12)
    np.testing.assert_array_equal(select_features_pearson(X, y), [0, 1])
    np.testing.assert_array_equal(select_features_pearson(X, y, signed=True), [0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pearson_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((50, 3))
    y = rng.integers(0, 3, 50)
    X[:, 1] += y
    ref = [stats.pearsonr(X[:, j], y).statistic for j in range(3)]
    np.testing.assert_allclose(pearson_r(X, y), ref, atol=1e-12)


def test_pearson_nothing_selected():
    y = np.array([0, 1, 0, 1])
    with pytest.raises(SelectionError, match="lower threshold"):
        select_features_pearson(np.array([[1.0], [1.0], [2.0], [2.0]]), y)


def test_pearson_constant_column_never_selected():
    y = np.array([0, 1, 2, 0, 1, 2])
    X = np.column_stack([np.ones(6), y])
    np.testing.assert_array_equal(select_features_pearson(X, y), [1])


# ---------------------------------------------------------------- split

def ds_of(y, d=2):
    y = np.asarray(y)
    return Dataset(np.arange(y.size * d, dtype=float).reshape(y.size, d), y, [f"f{j}" for j in range(d)], BINARY_CODEC)


def test_split_sizes_and_stratification():
    ds = ds_of(np.repeat([0, 1], 50))
    tr, va = train_val_split(ds, 0.2, seed=3)
    assert len(tr) == 80 and len(va) == 20
    assert va.class_counts().tolist() == [10, 10]
    assert sorted(np.concatenate([tr.X[:, 0], va.X[:, 0]]).tolist()) == sorted(ds.X[:, 0].tolist())


def test_split_is_seeded():
    y = np.random.default_rng(0).integers(0, 2, 100)
    a = stratified_split_indices(y, 0.2, 9)
    b = stratified_split_indices(y, 0.2, 9)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_split_bad_fraction():
    with pytest.raises(ParameterError):
        stratified_split_indices([0, 1], 1.0)


# ---------------------------------------------------------------- preprocessor and persistence

def test_preprocessor_round_trip(tmp_path):
    p = write(tmp_path, "a,proto,noise,label\n"
                        "0,tcp,3,Safe\n1,udp,1,Fun\n2,udp,4,Unsafe\n0,tcp,1,Safe\n1,udp,5,Fun\n2,icmp,9,Unsafe\n")
    raw = load_csv(p)
    pre = Preprocessor.fit(raw, "multiclass")
    assert "a" in pre.selected
    ds = pre.transform(raw)
    save_sidecar(pre, tmp_path / "side.json")
    again = load_sidecar(tmp_path / "side.json").transform(raw)
    np.testing.assert_array_equal(ds.X, again.X)
    np.testing.assert_array_equal(ds.y, again.y)


def test_dataset_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(4)
    ds = Dataset(rng.standard_normal((7, 3)), rng.integers(0, 3, 7), ["a", "b", "c"], MULTICLASS_CODEC,
                 rng.integers(0, 2, 7).astype(bool))
    save_dataset_csv(ds, tmp_path / "x.csv")
    back = load_dataset_csv(tmp_path / "x.csv", MULTICLASS_CODEC)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    np.testing.assert_array_equal(back.provenance, ds.provenance)
    assert back.feature_names == ["a", "b", "c"]
