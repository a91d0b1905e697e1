"""Confusion matrices, precision/recall/F1, ROC and PR curves, report files."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, LabelError

HISTORY_COLUMNS = ("epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy", "detection_rate")


def fmt(x):
    return format(float(x), ".17g")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class
    class_names: list

    @property
    def total(self):
        return int(self.counts.sum())


def confusion_matrix(y_true, y_pred, n_classes, class_names=None):
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise DataError(f"{y_true.size} true labels but {y_pred.size} predictions")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        bad = np.flatnonzero((arr < 0) | (arr >= n_classes))
        if bad.size:
            raise LabelError(f"{name} label {arr[bad[0]]} at index {bad[0]} outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    names = list(class_names) if class_names is not None else [str(k) for k in range(n_classes)]
    return ConfusionMatrix(counts, names)


def _safe_div(num, den, what):
    if den == 0:
        warnings.warn(f"{what}: zero denominator, reported as 0")
        return 0.0
    return num / den


@dataclass
class MetricTable:
    class_names: list
    precision: list
    recall: list
    f1: list
    support: list
    accuracy: float
    macro: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)

    def to_json(self):
        per_class = {
            name: {"precision": p, "recall": r, "f1": f, "support": s}
            for name, p, r, f, s in zip(self.class_names, self.precision, self.recall, self.f1, self.support)
        }
        return {"per_class": per_class, "macro": self.macro, "weighted": self.weighted, "accuracy": self.accuracy}


def precision_recall_f1(cm):
    c = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm)
    names = cm.class_names if isinstance(cm, ConfusionMatrix) else [str(k) for k in range(c.shape[0])]
    k = c.shape[0]
    P, R, F, S = [], [], [], []
    for i in range(k):
        tp, col, row = int(c[i, i]), int(c[:, i].sum()), int(c[i, :].sum())
        p = _safe_div(tp, col, f"precision of class {names[i]}")
        r = _safe_div(tp, row, f"recall of class {names[i]}")
        # 2PR/(P+R) rewritten as one division so the value is correctly rounded
        f = 0.0 if tp == 0 else 2 * tp / (row + col)
        P.append(float(p))
        R.append(float(r))
        F.append(float(f))
        S.append(int(c[i, :].sum()))
    total = int(c.sum())
    acc = _safe_div(int(np.trace(c)), total, "accuracy")

    def avg(vals, weights=None):
        if weights is None:
            return float(np.mean(vals)) if vals else 0.0
        return float(_safe_div(float(np.dot(vals, weights)), float(sum(weights)), "weighted average"))

    macro = {"precision": avg(P), "recall": avg(R), "f1": avg(F)}
    weighted = {"precision": avg(P, S), "recall": avg(R, S), "f1": avg(F, S)}
    return MetricTable(list(names), P, R, F, S, float(acc), macro, weighted)


def _sweep(y_true, scores):
    """Cumulative TP/FP at each distinct score, highest threshold first."""
    y = np.asarray(y_true).reshape(-1).astype(bool)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y.shape != s.shape:
        raise DataError(f"{y.size} labels but {s.size} scores")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    return s[last], tp, fp, int(y.sum()), int((~y).sum())


def roc_curve(y_true, scores):
    """``(fpr, tpr, thresholds)`` with a leading (0, 0) point at threshold +inf."""
    thr, tp, fp, n_pos, n_neg = _sweep(y_true, scores)
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC AUC is undefined when y_true contains a single class")
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    return fpr, tpr, np.r_[np.inf, thr]


def roc_curve_auc(y_true, scores):
    """ROC points ``[[fpr, tpr], ...]`` and the trapezoidal area under them."""
    fpr, tpr, _ = roc_curve(y_true, scores)
    return np.column_stack([fpr, tpr]), float(np.trapezoid(tpr, fpr))


def pr_curve(y_true, scores):
    """``[[recall, precision, threshold], ...]`` from the highest threshold down to full recall."""
    thr, tp, fp, n_pos, _ = _sweep(y_true, scores)
    if n_pos == 0:
        raise DataError("precision-recall curve needs at least one positive instance")
    recall = tp / n_pos
    precision = tp / (tp + fp)
    stop = int(np.argmax(recall >= 1.0)) + 1
    return np.column_stack([recall[:stop], precision[:stop], thr[:stop]])


@dataclass
class CurveSet:
    class_names: list
    roc: dict  # class name -> (fpr, tpr, thresholds) or None
    auc: dict  # class name -> float or None
    pr: dict   # class name -> array or None


def one_vs_rest_curves(y_true, class_scores, class_names):
    """Per-class ROC/PR treating that class as positive, scored by its probability column."""
    y_true = np.asarray(y_true)
    S = np.asarray(class_scores, dtype=np.float64)
    roc, auc, pr = {}, {}, {}
    for k, name in enumerate(class_names):
        pos = y_true == k
        try:
            fpr, tpr, thr = roc_curve(pos, S[:, k])
            roc[name] = (fpr, tpr, thr)
            auc[name] = float(np.trapezoid(tpr, fpr))
        except DataError:
            roc[name], auc[name] = None, None
        pr[name] = pr_curve(pos, S[:, k]) if pos.any() else None
    return CurveSet(list(class_names), roc, auc, pr)


# ---------------------------------------------------------------- report files

def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _safe_name(name):
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in str(name))


def dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def emit_report(out_dir, history, table, cm, curves, meta=None):
    """Write metrics.json, confusion.csv, roc_/pr_<class>.csv, history.csv and run_meta.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        metrics = table.to_json()
        metrics["auc"] = dict(curves.auc)
        dump_json(out / "metrics.json", metrics)
        written.append(out / "metrics.json")

        _write_csv(out / "confusion.csv", ["true\\predicted"] + list(cm.class_names),
                   [[name] + [int(v) for v in row] for name, row in zip(cm.class_names, cm.counts)])
        written.append(out / "confusion.csv")

        for name in curves.class_names:
            p = out / f"roc_{_safe_name(name)}.csv"
            r = curves.roc[name]
            rows = [] if r is None else [[fmt(t), fmt(f), fmt(tp)] for f, tp, t in zip(*r)]
            _write_csv(p, ["threshold", "fpr", "tpr"], rows)
            written.append(p)
            p = out / f"pr_{_safe_name(name)}.csv"
            pts = curves.pr[name]
            rows = [] if pts is None else [[fmt(t), fmt(rc), fmt(pc)] for rc, pc, t in pts]
            _write_csv(p, ["threshold", "recall", "precision"], rows)
            written.append(p)

        rows = [[int(h["epoch"])] + [fmt(h[c]) for c in HISTORY_COLUMNS[1:]] for h in history]
        _write_csv(out / "history.csv", list(HISTORY_COLUMNS), rows)
        written.append(out / "history.csv")

        if meta is not None:
            dump_json(out / "run_meta.json", meta)
            written.append(out / "run_meta.json")
    except OSError as exc:
        raise OSError(f"failed writing report into {out}: {exc}") from exc
    return written


def read_csv_floats(path):
    """Parse a report CSV back to ``(header, rows)`` with numeric cells as floats."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    out = []
    for row in rows[1:]:
        parsed = []
        for cell in row:
            try:
                parsed.append(float(cell))
            except ValueError:
                parsed.append(cell)
        out.append(parsed)
    return rows[0], out
