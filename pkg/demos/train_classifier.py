"""
Training the Conv1D/BiLSTM classifier
=====================================

The default network has one convolution (32 filters, kernel 3), max pooling,
a 32-unit bidirectional LSTM and a softmax head.  A few epochs on the toy
blobs are enough to separate them.
"""

from ganids.fixtures import toy_csv_path
from ganids.data import Preprocessor, load_csv, train_val_split
from ganids.model import ModelConfig, TrainConfig, build_model, load_checkpoint, save_checkpoint, train

raw = load_csv(toy_csv_path())
ds = Preprocessor.fit(raw, threshold=0.0).transform(raw)
train_ds, val_ds = train_val_split(ds, 0.2, seed=0)

model = build_model(ModelConfig(n_features=ds.n_features), seed=0)
print("parameters:", model.n_parameters())

for row in train(model, train_ds, TrainConfig(epochs=5, seed=0), val_ds):
    print("epoch {epoch}: loss {train_loss:.4f}  train acc {train_accuracy:.3f}  "
          "val acc {val_accuracy:.3f}  detection rate {detection_rate:.3f}".format(**row))

# Checkpoints reload bit for bit.
save_checkpoint(model, "toy_model.ckpt")
again = load_checkpoint("toy_model.ckpt")
print("reloaded predictions identical:", (again.predict_proba(val_ds.X) == model.predict_proba(val_ds.X)).all())
