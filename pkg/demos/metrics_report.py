"""
Metrics and report files
========================

Confusion matrix, per-class precision/recall/F1, one-vs-rest ROC and
precision-recall curves, all written to a folder of CSV/JSON files.
"""

import numpy as np

from ganids.metrics import confusion_matrix, emit_report, one_vs_rest_curves, precision_recall_f1, roc_curve_auc

# Three of the four positive/negative pairs are ordered correctly.
print("AUC:", roc_curve_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])[1])

rng = np.random.default_rng(0)
names = ["Acceptable", "Unrated", "Unsafe"]
y = rng.integers(0, 3, 60)
scores = rng.dirichlet(np.ones(3), 60)
scores[np.arange(60), y] += 0.6
scores /= scores.sum(axis=1, keepdims=True)

cm = confusion_matrix(y, scores.argmax(axis=1), 3, names)
table = precision_recall_f1(cm)
print(cm.counts)
for n, p, r, f in zip(names, table.precision, table.recall, table.f1):
    print(f"{n:10s} P {p:.3f}  R {r:.3f}  F1 {f:.3f}")

curves = one_vs_rest_curves(y, scores, names)
print("AUC per class:", {k: round(v, 4) for k, v in curves.auc.items()})
for path in emit_report("demo_report", [], table, cm, curves):
    print("wrote", path)
