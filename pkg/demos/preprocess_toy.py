"""
From a flow CSV to a training matrix
====================================

Load the bundled toy file, one-hot and scale the features, pick the columns
that correlate with the label and split off a stratified validation set.
"""

import numpy as np

from ganids.data import Preprocessor, drop_missing, load_csv, train_val_split
from ganids.fixtures import toy_csv_path

raw = drop_missing(load_csv(toy_csv_path()))
print(f"{raw.n_rows} rows, columns: {[c.name for c in raw.schema]}")

# Raw labels such as "Safe" or "Fun" are regrouped into three classes.
pre = Preprocessor.fit(raw, task="multiclass", threshold=0.5)
ds = pre.transform(raw)
print("class names:", pre.codec.class_names)
print("class counts:", ds.class_counts())
print("features kept by the |r| > 0.5 rule:", pre.selected)

train, val = train_val_split(ds, 0.2, seed=0)
print("train/val rows:", len(train), len(val))
print("scaled feature means (close to 0):", np.round(ds.X.mean(axis=0), 3))
