"""CSV ingestion and preprocessing for flow-feature tables.

The flow is::

    raw = load_csv(path, label_column="label")
    raw = drop_missing(raw)
    pre = Preprocessor.fit(raw_train, task="multiclass")
    train = pre.transform(raw_train)

Categorical columns are one-hot encoded, numeric columns standard scaled
(population std), labels encoded by a :class:`LabelCodec`, and features kept
when their Pearson correlation with the encoded label exceeds a threshold.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EncodingError, IngestionError, LabelError, ParameterError, SelectionError, DataError

log = logging.getLogger(__name__)

NUMERIC, CATEGORICAL, LABEL = "numeric", "categorical", "label"
DATASET_FORMAT = "ganids-dataset/1"


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL, LABEL):
            raise ParameterError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories or len(set(self.categories)) != len(self.categories):
                raise ParameterError(f"column {self.name!r}: categories must be non-empty and unique")

    def to_json(self):
        return {"name": self.name, "kind": self.kind, "categories": list(self.categories)}

    @classmethod
    def from_json(cls, d):
        return cls(d["name"], d["kind"], tuple(d.get("categories", ())))


@dataclass
class RawDataset:
    """String cells as read from disk, column-major, plus the typed schema."""

    schema: list
    cells: dict
    label_column: str
    missing: dict = field(default_factory=dict)
    dropped: int = 0

    @property
    def n_rows(self):
        return len(self.cells[self.label_column])

    def column(self, name):
        return self.cells[name]

    def take(self, idx):
        return replace(self, cells={k: [v[i] for i in idx] for k, v in self.cells.items()})


# ---------------------------------------------------------------- ingestion

def _parse_float(s):
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _is_missing(cell, kind):
    if cell.strip() == "":
        return True
    return kind == NUMERIC and _parse_float(cell) is None


def load_csv(path, schema=None, label_column="label"):
    """Read a header-first, comma-separated UTF-8 file into a :class:`RawDataset`.

    Without ``schema`` each column is numeric if every non-empty cell parses as
    a finite number, otherwise categorical with lexicographically ordered
    categories.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path}: file is empty, expected a header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise IngestionError(f"{path}: duplicate column names in header")
    if label_column not in header:
        raise IngestionError(f"{path}: label column {label_column!r} not found in header {header}")
    body = rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}")
    cells = {name: [row[j].strip() for row in body] for j, name in enumerate(header)}

    if schema is None:
        schema = [_infer_column(name, cells[name], name == label_column) for name in header]
    else:
        names = [c.name for c in schema]
        if set(names) != set(header):
            raise IngestionError(f"{path}: schema columns {names} do not match header {header}")
        order = {c.name: c for c in schema}
        schema = [order[name] for name in header]
    missing = {c.name: sum(_is_missing(v, c.kind) for v in cells[c.name]) for c in schema}
    log.info("loaded %s: %d rows, %d columns", path, len(body), len(header))
    return RawDataset(schema=schema, cells=cells, label_column=label_column, missing=missing)


def _infer_column(name, values, is_label):
    present = [v for v in values if v != ""]
    if is_label:
        return ColumnSchema(name, LABEL)
    if present and all(_parse_float(v) is not None for v in present):
        return ColumnSchema(name, NUMERIC)
    cats = tuple(sorted(set(present))) or ("",)
    return ColumnSchema(name, CATEGORICAL, cats)


def drop_missing(raw):
    """Remove every row with an empty or unparseable cell."""
    n = raw.n_rows
    keep = [i for i in range(n) if not any(_is_missing(raw.cells[c.name][i], c.kind) for c in raw.schema)]
    if not keep:
        raise DataError(f"all {n} rows contain missing values; dataset would be empty")
    out = raw.take(keep)
    out.dropped = raw.dropped + (n - len(keep))
    out.missing = {c.name: 0 for c in raw.schema}
    return out


# ---------------------------------------------------------------- encodings

def one_hot_encode(values, categories):
    """Rows of indicator vectors; position ``j`` is set for ``categories[j]``."""
    pos = {c: j for j, c in enumerate(categories)}
    out = np.zeros((len(values), len(categories)))
    for i, v in enumerate(values):
        if v not in pos:
            raise EncodingError(f"value {v!r} not among the fitted categories {list(categories)}")
        out[i, pos[v]] = 1.0
    return out


def one_hot_decode(matrix, categories):
    return [categories[j] for j in np.asarray(matrix).argmax(axis=1)]


@dataclass(frozen=True)
class ScalerParams:
    columns: tuple
    mean: np.ndarray
    std: np.ndarray

    def to_json(self):
        return {"columns": list(self.columns), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(tuple(d["columns"]), np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def fit_standard_scaler(X, columns=None):
    X = np.asarray(X, dtype=np.float64)
    columns = tuple(columns) if columns is not None else tuple(str(j) for j in range(X.shape[1]))
    return ScalerParams(columns, X.mean(axis=0), X.std(axis=0))


def apply_standard_scaler(X, params):
    """``(X - mean) / std``; zero-variance columns become all zeros."""
    X = np.asarray(X, dtype=np.float64)
    safe = np.where(params.std > 0, params.std, 1.0)
    out = (X - params.mean) / safe
    out[:, params.std == 0] = 0.0
    return out


@dataclass(frozen=True)
class LabelCodec:
    mode: str
    class_names: tuple
    raw_to_class: dict

    @property
    def n_classes(self):
        return len(self.class_names)

    def encode(self, raw_labels):
        out = np.empty(len(raw_labels), dtype=np.int64)
        for i, r in enumerate(raw_labels):
            key = str(r).strip().lower()
            if key not in self.raw_to_class:
                raise LabelError(f"unknown label {r!r} at row {i}; expected one of {sorted(self.raw_to_class)}")
            out[i] = self.raw_to_class[key]
        return out

    def to_json(self):
        return {"mode": self.mode, "class_names": list(self.class_names), "raw_to_class": dict(self.raw_to_class)}

    @classmethod
    def from_json(cls, d):
        return cls(d["mode"], tuple(d["class_names"]), dict(d["raw_to_class"]))


MULTICLASS_CODEC = LabelCodec(
    "multiclass",
    ("Acceptable", "Unrated", "Unsafe"),
    {"acceptable": 0, "safe": 0, "unrated": 1, "fun": 1, "unsafe": 2},
)
BINARY_CODEC = LabelCodec(
    "binary",
    ("normal", "abnormal"),
    {"acceptable": 0, "safe": 0, "unrated": 1, "fun": 1, "unsafe": 1},
)


def codec_for(task):
    if task == "multiclass":
        return MULTICLASS_CODEC
    if task == "binary":
        return BINARY_CODEC
    raise ParameterError(f"unknown task {task!r}; expected 'multiclass' or 'binary'")


def encode_labels_multiclass(raw_labels):
    return MULTICLASS_CODEC.encode(raw_labels)


def encode_labels_binary(raw_labels):
    return BINARY_CODEC.encode(raw_labels)


# ---------------------------------------------------------------- selection

def pearson_r(X, y):
    """Column-wise Pearson r against ``y``; NaN for zero-variance columns."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    num = xc.T @ yc
    den = np.sqrt((xc * xc).sum(axis=0) * (yc @ yc))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    r[den == 0] = np.nan
    return r


def select_features_pearson(X, y_encoded, threshold=0.5, signed=False):
    """Indices (original order) of columns whose correlation with the label exceeds ``threshold``.

    By default the absolute value of r is compared; ``signed=True`` compares r itself.
    """
    r = pearson_r(X, y_encoded)
    score = r if signed else np.abs(r)
    keep = np.flatnonzero(np.nan_to_num(score, nan=-np.inf) > threshold)
    if keep.size == 0:
        best = np.nanmax(score) if np.any(~np.isnan(score)) else float("nan")
        raise SelectionError(
            f"no feature has {'r' if signed else '|r|'} > {threshold} (best {best:.4f}); try a lower threshold"
        )
    return keep


# ---------------------------------------------------------------- datasets

@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    codec: LabelCodec
    provenance: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DataError(f"X shape {self.X.shape} does not match {self.y.shape[0]} labels")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.codec.n_classes):
            raise LabelError(f"labels must lie in [0, {self.codec.n_classes})")

    def __len__(self):
        return self.y.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def class_counts(self):
        return np.bincount(self.y, minlength=self.codec.n_classes)

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        prov = None if self.provenance is None else self.provenance[idx]
        return Dataset(self.X[idx], self.y[idx], list(self.feature_names), self.codec, prov)


def stratified_split_indices(y, val_fraction=0.2, seed=0):
    """Seeded per-class shuffle; ``round(count * val_fraction)`` of each class go to validation."""
    if not 0 < val_fraction < 1:
        raise ParameterError(f"val_fraction must be in (0, 1), got {val_fraction}")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, val = [], []
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        if idx.size == 1:
            warnings.warn(f"class {cls} has a single instance; it is kept in the training split")
            train.append(idx)
            continue
        n_val = min(max(int(round(idx.size * val_fraction)), 1), idx.size - 1)
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    train = np.concatenate(train) if train else np.empty(0, dtype=np.int64)
    val = np.concatenate(val) if val else np.empty(0, dtype=np.int64)
    return rng.permutation(train), rng.permutation(val)


def train_val_split(ds, val_fraction=0.2, seed=0):
    tr, va = stratified_split_indices(ds.y, val_fraction, seed)
    return ds.take(tr), ds.take(va)


# ---------------------------------------------------------------- preprocessor

def expand_features(raw, max_categories=None):
    """Numeric columns as-is, categorical columns one-hot. Returns ``(X, names)``."""
    blocks, names = [], []
    for col in raw.schema:
        values = raw.cells[col.name]
        if col.kind == NUMERIC:
            blocks.append(np.array([float(v) for v in values]).reshape(-1, 1))
            names.append(col.name)
        elif col.kind == CATEGORICAL:
            if max_categories is not None and len(col.categories) > max_categories:
                continue
            blocks.append(one_hot_encode(values, col.categories))
            names.extend(f"{col.name}={c}" for c in col.categories)
    if not blocks:
        raise DataError("no usable feature columns")
    return np.hstack(blocks), names


@dataclass
class Preprocessor:
    """Fitted preprocessing state: schema, scaler, label codec, selected features."""

    schema: list
    label_column: str
    codec: LabelCodec
    scaler: ScalerParams
    selected: list
    threshold: float = 0.5
    signed: bool = False
    max_categories: int | None = None

    @classmethod
    def fit(cls, raw, task="multiclass", threshold=0.5, signed=False, max_categories=None):
        codec = codec_for(task)
        X, names = expand_features(raw, max_categories)
        y = codec.encode(raw.cells[raw.label_column])
        scaler = fit_standard_scaler(X, names)
        keep = select_features_pearson(apply_standard_scaler(X, scaler), y, threshold, signed)
        return cls(list(raw.schema), raw.label_column, codec, scaler, [names[j] for j in keep],
                   threshold, signed, max_categories)

    def transform(self, raw):
        X, names = expand_features(raw, self.max_categories)
        if tuple(names) != self.scaler.columns:
            raise DataError("feature columns differ from those seen at fit time")
        Xs = apply_standard_scaler(X, self.scaler)
        pos = {n: j for j, n in enumerate(names)}
        cols = [pos[n] for n in self.selected]
        y = self.codec.encode(raw.cells[raw.label_column])
        return Dataset(Xs[:, cols], y, list(self.selected), self.codec)

    def to_json(self):
        return {
            "format": DATASET_FORMAT,
            "schema": [c.to_json() for c in self.schema],
            "label_column": self.label_column,
            "codec": self.codec.to_json(),
            "scaler": self.scaler.to_json(),
            "selected_features": list(self.selected),
            "threshold": self.threshold,
            "signed": self.signed,
            "max_categories": self.max_categories,
        }

    @classmethod
    def from_json(cls, d):
        if d.get("format") != DATASET_FORMAT:
            raise DataError(f"unsupported sidecar format {d.get('format')!r}")
        return cls(
            [ColumnSchema.from_json(c) for c in d["schema"]],
            d["label_column"],
            LabelCodec.from_json(d["codec"]),
            ScalerParams.from_json(d["scaler"]),
            list(d["selected_features"]),
            d["threshold"],
            d["signed"],
            d["max_categories"],
        )


# ---------------------------------------------------------------- persistence

def fmt_float(x):
    return format(float(x), ".17g")


def save_dataset_csv(ds, path):
    """Features, integer label and (if present) a provenance column."""
    path = Path(path)
    header = list(ds.feature_names) + ["label"]
    if ds.provenance is not None:
        header.append("provenance")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            row = [fmt_float(v) for v in ds.X[i]] + [int(ds.y[i])]
            if ds.provenance is not None:
                row.append("synthetic" if ds.provenance[i] else "real")
            w.writerow(row)


def load_dataset_csv(path, codec):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: empty dataset file")
    header, body = rows[0], rows[1:]
    has_prov = header[-1] == "provenance"
    nfeat = len(header) - (2 if has_prov else 1)
    X = np.array([[float(v) for v in r[:nfeat]] for r in body], dtype=np.float64).reshape(len(body), nfeat)
    y = np.array([int(r[nfeat]) for r in body], dtype=np.int64)
    prov = np.array([r[-1] == "synthetic" for r in body], dtype=bool) if has_prov else None
    return Dataset(X, y, header[:nfeat], codec, prov)


def save_sidecar(pre, path, extra=None):
    doc = pre.to_json()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_sidecar(path):
    return Preprocessor.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
