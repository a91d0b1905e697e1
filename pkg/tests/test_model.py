import hashlib
import struct

import numpy as np
import pytest

from ganids import checkpoint
from ganids.data import BINARY_CODEC, MULTICLASS_CODEC, Dataset
from ganids.errors import CheckpointError, ConfigError, ShapeError
from ganids.fixtures import toy_blobs
from ganids.model import (IDSModel, ModelConfig, TrainConfig, _loss, detection_rate, load_checkpoint,
                          save_checkpoint, train)
from ganids.nn import grad_check


def toy(codec=MULTICLASS_CODEC):
    X, y = toy_blobs()
    if codec is BINARY_CODEC:
        y = (y > 0).astype(np.int64)
    return Dataset(X, y, [f"f{j}" for j in range(X.shape[1])], codec)


def zero_head(model):
    for v in model.head.params.values():
        v[:] = 0.0


# ---------------------------------------------------------------- shapes

def test_table_shapes_for_ten_features():
    m = IDSModel(ModelConfig(n_features=10))
    x = np.random.default_rng(0).standard_normal((2, 10))
    conv = m.convs[0].forward(x[:, :, None])
    pooled = m.pool.forward(conv)
    assert conv.shape == (2, 8, 32)
    assert pooled.shape == (2, 4, 32)
    assert m.bilstm.forward(pooled).shape == (2, 4, 64)
    assert m.head.params["W"].shape == (256, 3)
    assert m.forward(x).shape == (2, 3)


def test_too_few_features():
    with pytest.raises(ConfigError, match="n_features"):
        ModelConfig(n_features=3)


def test_wrong_input_width():
    with pytest.raises(ShapeError):
        IDSModel(ModelConfig(n_features=10)).forward(np.zeros((1, 9)))


def test_binary_head_is_probability():
    m = IDSModel(ModelConfig("binary", n_features=8), seed=1)
    p = m.predict_proba(np.random.default_rng(2).standard_normal((20, 8)) * 10)
    assert p.shape == (20, 1) and np.all((p >= 0) & (p <= 1))


def test_same_seed_same_initialisation():
    a, b = IDSModel(ModelConfig(), 4), IDSModel(ModelConfig(), 4)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_extra_branches_shapes():
    m = IDSModel(ModelConfig(n_features=12, extra_branches=(5, 7)))
    assert m.cfg.conv_len == 6 and m.cfg.seq_len == 3
    assert m.forward(np.zeros((2, 12))).shape == (2, 3)
    assert {"conv0.kernels", "conv1.kernels", "conv2.kernels"} <= set(m.params)


# ---------------------------------------------------------------- inference rules

def test_multiclass_rows_sum_to_one():
    m = IDSModel(ModelConfig(n_features=10), 3)
    p = m.predict_proba(np.random.default_rng(1).standard_normal((50, 10)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_zero_head_uniform_and_lowest_index_tie():
    m = IDSModel(ModelConfig(n_features=10))
    zero_head(m)
    X = np.random.default_rng(0).standard_normal((6, 10))
    np.testing.assert_allclose(m.predict_proba(X), 1 / 3, atol=1e-15)
    np.testing.assert_array_equal(m.predict(X), 0)


def test_binary_half_is_positive():
    m = IDSModel(ModelConfig("binary", n_features=10))
    zero_head(m)
    X = np.zeros((3, 10))
    np.testing.assert_array_equal(m.predict_proba(X), 0.5)
    np.testing.assert_array_equal(m.predict(X), 1)


def test_threshold_sweep_never_increases_positives():
    m = IDSModel(ModelConfig("binary", n_features=10), 5)
    X = np.random.default_rng(5).standard_normal((200, 10)) * 3
    counts = [int(m.predict(X, t).sum()) for t in np.linspace(0, 1, 41)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_detection_rate_definition():
    y = np.array([0, 1, 1, 2, 2, 2])
    p = np.array([1, 1, 0, 2, 2, 0])
    assert detection_rate(y, p, 3) == pytest.approx((1 / 2 + 2 / 3) / 2)
    assert detection_rate(np.array([0, 1, 1]), np.array([0, 1, 0]), 2) == 0.5


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("mode", ["multiclass", "binary"])
def test_full_model_gradient(mode):
    m = IDSModel(ModelConfig(mode, n_features=10, conv_filters=4, lstm_units=3), seed=2)
    x = np.random.default_rng(3).standard_normal((2, 10))
    assert grad_check(m, x, 1e-5, max_coords=12) < 1e-4


def test_fused_loss_gradient_matches_finite_differences():
    m = IDSModel(ModelConfig(n_features=8, conv_filters=3, lstm_units=2), seed=6)
    X = np.random.default_rng(7).standard_normal((3, 8))
    y = np.array([0, 2, 1])
    m.loss_and_grad(X, y)
    W = m.head.params["W"]
    g = m.grads["head.W"].copy()
    ds = Dataset(X, y, [str(j) for j in range(8)], MULTICLASS_CODEC)
    for idx in [(0, 0), (3, 1), (5, 2)]:
        orig = W[idx]
        W[idx] = orig + 1e-6
        up = _loss(m, ds)
        W[idx] = orig - 1e-6
        down = _loss(m, ds)
        W[idx] = orig
        assert g[idx] == pytest.approx((up - down) / 2e-6, rel=1e-5, abs=1e-9)


# ---------------------------------------------------------------- training

def test_zero_epochs_is_a_no_op():
    m = IDSModel(ModelConfig(n_features=12))
    before = {k: v.copy() for k, v in m.params.items()}
    assert train(m, toy(), TrainConfig(epochs=0)) == []
    for k, v in m.params.items():
        np.testing.assert_array_equal(v, before[k])


def test_training_is_deterministic():
    runs = [train(IDSModel(ModelConfig(n_features=12), 1), toy(), TrainConfig(epochs=2, seed=1)) for _ in range(2)]
    assert runs[0] == runs[1]


def test_loss_mostly_non_increasing_early():
    good = []
    for seed in range(3):
        ds = toy()
        m = IDSModel(ModelConfig(n_features=12), seed)
        initial = [_loss(m, ds)]
        hist = train(m, ds, TrainConfig(epochs=5, seed=seed), val_ds=ds)
        losses = initial + [h["train_loss"] for h in hist]
        good.append(sum(b <= a for a, b in zip(losses, losses[1:])))
    assert sorted(good)[1] >= 4


def test_binary_training_learns():
    m = IDSModel(ModelConfig("binary", n_features=12), 0)
    hist = train(m, toy(BINARY_CODEC), TrainConfig(epochs=5))
    assert hist[-1]["train_accuracy"] > 0.9
    assert set(hist[-1]) == {"epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy", "detection_rate"}


# ---------------------------------------------------------------- checkpoints

def param_digest(m):
    h = hashlib.sha256()
    for k in sorted(m.params):
        h.update(k.encode() + m.params[k].tobytes())
    return h.hexdigest()


def test_checkpoint_round_trip_bit_exact(tmp_path):
    m = IDSModel(ModelConfig(n_features=12), 3)
    train(m, toy(), TrainConfig(epochs=1, seed=3))
    save_checkpoint(m, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    X = toy().X
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))
    assert param_digest(back) == param_digest(m)
    assert back.history == m.history
    assert back.optimizer.t == m.optimizer.t
    for k in m.optimizer.m:
        np.testing.assert_array_equal(back.optimizer.m[k], m.optimizer.m[k])


def test_checkpoint_corrupted_byte(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(IDSModel(ModelConfig()), path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_checkpoint_newer_version(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(checkpoint.pack({"kind": "ids_model"}, {}, version=checkpoint.FORMAT_VERSION + 1))
    with pytest.raises(CheckpointError, match="newer"):
        load_checkpoint(path)


def test_checkpoint_layout(tmp_path):
    blob = checkpoint.pack({"a": 1}, {"x": np.array([1.5, -2.0])})
    magic, version, hlen = struct.unpack_from("<8sIQ", blob)
    assert magic == b"GANIDSCK" and version == 1
    assert struct.unpack_from("<2d", blob, 20 + hlen) == (1.5, -2.0)
    meta, arrays = checkpoint.unpack(blob)
    assert meta == {"a": 1}
    np.testing.assert_array_equal(arrays["x"], [1.5, -2.0])


def test_checkpoint_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.unpack(b"NOTACKPT" + bytes(20))
