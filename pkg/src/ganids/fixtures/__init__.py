"""Small deterministic datasets shipped with the package."""
from __future__ import annotations

import csv
from importlib import resources

import numpy as np

TOY_CLASS_SIZES = (60, 140, 100)
# raw label strings cycled within each class, so every vocabulary entry appears
TOY_RAW_LABELS = (("Acceptable", "Safe"), ("Unrated", "Fun"), ("Unsafe",))
TOY_FEATURES = 12
TOY_INFORMATIVE = 8


def toy_blobs(seed=7, sizes=TOY_CLASS_SIZES, spread=2.5):
    """Three Gaussian blobs: the first 8 features shift by ``spread`` per class, the last 4 are noise."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for cls, n in enumerate(sizes):
        centre = np.zeros(TOY_FEATURES)
        centre[:TOY_INFORMATIVE] = cls * spread
        X.append(centre + rng.standard_normal((n, TOY_FEATURES)))
        y.append(np.full(n, cls))
    X, y = np.vstack(X), np.concatenate(y)
    order = rng.permutation(len(y))
    return X[order], y[order]


def write_toy_csv(path, seed=7):
    X, y = toy_blobs(seed)
    seen = [0, 0, 0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"feat_{j:02d}" for j in range(TOY_FEATURES)] + ["label"])
        for row, cls in zip(X, y):
            names = TOY_RAW_LABELS[cls]
            w.writerow([format(v, ".6f") for v in row] + [names[seen[cls] % len(names)]])
            seen[cls] += 1


def toy_csv_path():
    """Path of the shipped 300 x 12 three-blob CSV."""
    return resources.files(__name__).joinpath("toy_blobs.csv")
