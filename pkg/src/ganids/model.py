"""Conv1D -> MaxPool -> BiLSTM -> Flatten -> Dense classifier over flow features.

Each feature vector of length ``d`` is read as a length-``d`` sequence with a
single channel.  The default network is::

    Conv1D(32 filters, kernel 3, ReLU) -> MaxPool1D(2) -> BiLSTM(32, all steps)
    -> Flatten -> Dense(3, softmax)          # multiclass
               -> Dense(1, sigmoid)          # binary

``ModelConfig.extra_branches`` adds parallel convolutions with other kernel
sizes; branch outputs are cropped to the shortest length and stacked along
the channel axis before pooling.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint
from .data import Dataset, train_val_split
from .errors import CheckpointError, ConfigError, ShapeError, TrainingError, DataError
from .nn import (Adam, BiLSTM, Conv1D, Dense, Flatten, MaxPool1D, binary_crossentropy,
                 as_float, categorical_crossentropy, one_hot, sigmoid, softmax)

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    mode: str = "multiclass"
    n_features: int = 10
    n_classes: int = 3
    conv_filters: int = 32
    kernel_size: int = 3
    pool: int = 2
    lstm_units: int = 32
    extra_branches: tuple = ()

    def __post_init__(self):
        self.extra_branches = tuple(int(k) for k in self.extra_branches)
        if self.mode not in ("multiclass", "binary"):
            raise ConfigError(f"mode must be 'multiclass' or 'binary', got {self.mode!r}")
        if self.mode == "binary":
            self.n_classes = 2
        kmax = max(self.kernels)
        if self.n_features < kmax or self.seq_len < 1:
            need = kmax - 1 + self.pool
            raise ConfigError(
                f"n_features={self.n_features} too small: need at least {need} features "
                f"for kernel {kmax} and pool {self.pool}"
            )

    @property
    def kernels(self):
        return (self.kernel_size,) + self.extra_branches

    @property
    def conv_len(self):
        return self.n_features - max(self.kernels) + 1

    @property
    def seq_len(self):
        return self.conv_len // self.pool

    @property
    def n_outputs(self):
        return self.n_classes if self.mode == "multiclass" else 1


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    val_fraction: float = 0.2
    seed: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")


class IDSModel:
    def __init__(self, cfg, seed=0):
        self.cfg = cfg
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.convs = [Conv1D(1, cfg.conv_filters, k, "relu", rng) for k in cfg.kernels]
        self.pool = MaxPool1D(cfg.pool)
        self.bilstm = BiLSTM(cfg.conv_filters * len(self.convs), cfg.lstm_units, True, rng)
        self.flatten = Flatten()
        head_act = "softmax" if cfg.mode == "multiclass" else "sigmoid"
        self.head = Dense(cfg.seq_len * 2 * cfg.lstm_units, cfg.n_outputs, head_act, rng)
        self.optimizer = Adam()
        self.history = []

    # -- parameter plumbing

    def _named_layers(self):
        names = ["conv"] if len(self.convs) == 1 else [f"conv{i}" for i in range(len(self.convs))]
        return list(zip(names, self.convs)) + [("bilstm", self.bilstm), ("head", self.head)]

    @property
    def params(self):
        return {f"{n}.{k}": v for n, layer in self._named_layers() for k, v in layer.params.items()}

    @property
    def grads(self):
        return {f"{n}.{k}": v for n, layer in self._named_layers() for k, v in layer.grads.items()}

    def zero_grad(self):
        for _, layer in self._named_layers():
            layer.zero_grad()

    def load_params(self, arrays):
        for n, layer in self._named_layers():
            own = {k[len(n) + 1:]: np.array(v) for k, v in arrays.items() if k.startswith(n + ".")}
            if set(own) != set(layer.params):
                raise CheckpointError(f"parameter set for layer {n!r} does not match the model config")
            if isinstance(layer, BiLSTM):
                layer.load_params(own)
            else:
                layer.params.update(own)
                layer.zero_grad()

    def n_parameters(self):
        return int(sum(v.size for v in self.params.values()))

    def kink_state(self):
        return tuple(s for layer in self.convs + [self.pool] for s in layer.kink_state())

    # -- forward / backward

    def forward_logits(self, X):
        X = as_float(X)
        if X.ndim != 2 or X.shape[1] != self.cfg.n_features:
            raise ShapeError(f"expected input of shape [n, {self.cfg.n_features}], got {X.shape}")
        seq = X[:, :, None]
        L = self.cfg.conv_len
        feats = np.concatenate([conv.forward(seq)[:, :L, :] for conv in self.convs], axis=2)
        h = self.bilstm.forward(self.pool.forward(feats))
        flat = self.flatten.forward(h)
        self.head.forward(flat)
        return self.head._z

    def forward(self, X):
        self.forward_logits(X)
        return self.head._y

    def backward(self, dout, *, pre_activation=False):
        dflat = self.head.backward(dout, pre_activation=pre_activation)
        dfeats = self.pool.backward(self.bilstm.backward(self.flatten.backward(dflat)))
        F = self.cfg.conv_filters
        dx = 0.0
        for i, conv in enumerate(self.convs):
            full = np.zeros(conv._z.shape)
            full[:, :dfeats.shape[1], :] = dfeats[:, :, i * F:(i + 1) * F]
            dx = dx + conv.backward(full)
        return dx[:, :, 0]

    def loss_and_grad(self, X, y):
        """Cross-entropy from logits and accumulated parameter gradients."""
        self.zero_grad()
        z = self.forward_logits(X)
        n = z.shape[0]
        if self.cfg.mode == "multiclass":
            zmax = z.max(axis=1, keepdims=True)
            lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
            loss = float(np.mean(lse - z[np.arange(n), y]))
            dz = (softmax(z) - one_hot(y, self.cfg.n_classes)) / n
        else:
            t = np.asarray(y, dtype=np.float64).reshape(-1, 1)
            loss = float(np.mean(np.maximum(z, 0) - t * z + np.log1p(np.exp(-np.abs(z)))))
            dz = (sigmoid(z) - t) / n
        self.backward(dz, pre_activation=True)
        return loss

    # -- inference

    def predict_proba(self, X, batch_size=1024):
        X = as_float(X)
        if X.ndim != 2 or X.shape[1] != self.cfg.n_features:
            raise ShapeError(f"expected input of shape [n, {self.cfg.n_features}], got {X.shape}")
        if X.shape[0] == 0:
            return np.zeros((0, self.cfg.n_outputs))
        return np.concatenate([self.forward(X[i:i + batch_size]) for i in range(0, X.shape[0], batch_size)])

    def predict(self, X, threshold=0.5):
        p = self.predict_proba(X)
        if self.cfg.mode == "multiclass":
            return p.argmax(axis=1)
        return (p[:, 0] >= threshold).astype(np.int64)

    def class_scores(self, X):
        """Per-class probability columns; binary models give ``[1 - p, p]``."""
        p = self.predict_proba(X)
        return p if self.cfg.mode == "multiclass" else np.hstack([1.0 - p, p])


def build_model(cfg, seed=0):
    return IDSModel(cfg, seed)


# ---------------------------------------------------------------- training

def detection_rate(y_true, y_pred, n_classes):
    """Recall averaged over the non-normal classes (everything except class 0)."""
    rec = []
    for c in range(1, n_classes):
        sup = np.sum(y_true == c)
        rec.append(np.sum((y_true == c) & (y_pred == c)) / sup if sup else 0.0)
    return float(np.mean(rec))


def _loss(model, ds):
    p = model.predict_proba(ds.X)
    if model.cfg.mode == "multiclass":
        return categorical_crossentropy(p, one_hot(ds.y, model.cfg.n_classes))
    return binary_crossentropy(p[:, 0], ds.y)


def evaluate_split(model, ds):
    if len(ds) == 0:
        return {"loss": float("nan"), "accuracy": float("nan"), "detection_rate": float("nan")}
    pred = model.predict(ds.X)
    return {
        "loss": _loss(model, ds),
        "accuracy": float(np.mean(pred == ds.y)),
        "detection_rate": detection_rate(ds.y, pred, model.cfg.n_classes),
    }


def train(model, train_ds, cfg, val_ds=None):
    """Mini-batch Adam training; returns the per-epoch history (also kept on ``model.history``).

    Without ``val_ds`` a stratified ``cfg.val_fraction`` of ``train_ds`` is held out.
    """
    if len(train_ds) == 0:
        raise DataError("cannot train on an empty dataset")
    if train_ds.n_features != model.cfg.n_features:
        raise ShapeError(f"dataset has {train_ds.n_features} features, model expects {model.cfg.n_features}")
    if val_ds is None:
        train_ds, val_ds = train_val_split(train_ds, cfg.val_fraction, cfg.seed)
    opt = model.optimizer
    opt.lr, opt.beta1, opt.beta2, opt.epsilon = cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon
    rng = np.random.default_rng(cfg.seed)
    n = len(train_ds)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss = model.loss_and_grad(train_ds.X[idx], train_ds.y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            try:
                opt.step(model.params, model.grads)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from exc
        tr = evaluate_split(model, train_ds)
        va = evaluate_split(model, val_ds)
        row = {
            "epoch": epoch + 1,
            "train_loss": tr["loss"],
            "train_accuracy": tr["accuracy"],
            "val_loss": va["loss"],
            "val_accuracy": va["accuracy"],
            "detection_rate": va["detection_rate"],
        }
        model.history.append(row)
        log.info("epoch %d: loss %.4f acc %.4f val_acc %.4f", epoch + 1, tr["loss"], tr["accuracy"], va["accuracy"])
    return model.history


# ---------------------------------------------------------------- checkpoints

def _checkpoint_payload(model):
    meta = {
        "kind": "ids_model",
        "config": asdict(model.cfg),
        "seed": model.seed,
        "history": model.history,
        "optimizer": {**model.optimizer.hyperparameters(), "t": model.optimizer.t},
    }
    arrays = {f"param.{k}": v for k, v in model.params.items()}
    arrays.update(checkpoint.optimizer_arrays(model.optimizer, "adam"))
    return meta, arrays


def save_checkpoint(model, path):
    meta, arrays = _checkpoint_payload(model)
    checkpoint.save(path, meta, arrays)


def load_checkpoint(path):
    meta, arrays = checkpoint.load(path)
    if meta.get("kind") != "ids_model":
        raise CheckpointError(f"{path} holds a {meta.get('kind')!r} checkpoint, not an ids_model")
    cfg = ModelConfig(**meta["config"])
    model = IDSModel(cfg, meta["seed"])
    model.load_params({k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")})
    o = meta["optimizer"]
    model.optimizer = Adam(o["lr"], o["beta1"], o["beta2"], o["epsilon"])
    model.optimizer.t = o["t"]
    checkpoint.restore_optimizer(model.optimizer, arrays, "adam")
    model.history = meta["history"]
    return model
