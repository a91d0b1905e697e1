"""Tabular GAN used to synthesise minority-class flow records.

Generator: 100-d standard-normal noise -> Dense(128, ReLU) -> Dense(d, ReLU).
Discriminator: Dense(128, ReLU) -> Dense(K, softmax), K being the task's
class count.

There is no separate real/fake output.  One generator is trained per class
that needs samples.  While training the generator for ``target_class``, the
discriminator learns to give real rows their true label and generated rows a
"fake-proxy" label (the most populous other class); the generator is pushed
to make the discriminator answer ``target_class``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import checkpoint
from .data import Dataset
from .errors import CheckpointError, ConfigError, ParameterError, ShapeError, TrainingError
from .nn import Adam, Dense, one_hot, softmax

log = logging.getLogger(__name__)

NOISE_DIM = 100
HIDDEN = 128


@dataclass
class GanTrainConfig:
    steps: int = 5000
    batch_size: int = 32
    seed: int = 0
    target_class: int = 0
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    d_lr: float | None = None
    output_activation: str = "relu"

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("GAN steps must be >= 0 and batch_size >= 1")
        if self.output_activation not in ("relu", "linear"):
            raise ConfigError(f"generator output activation must be 'relu' or 'linear', got {self.output_activation!r}")

    def optimizer(self, lr=None):
        return Adam(self.lr if lr is None else lr, self.beta1, self.beta2, self.epsilon)


class _Stack:
    def __init__(self, layers):
        self.layers = layers

    @property
    def params(self):
        return {f"{n}.{k}": v for n, layer in self.layers for k, v in layer.params.items()}

    @property
    def grads(self):
        return {f"{n}.{k}": v for n, layer in self.layers for k, v in layer.grads.items()}

    def zero_grad(self):
        for _, layer in self.layers:
            layer.zero_grad()

    def load_params(self, arrays):
        for n, layer in self.layers:
            for k in layer.params:
                layer.params[k] = np.array(arrays[f"{n}.{k}"])
            layer.zero_grad()

    def kink_state(self):
        return tuple(s for _, layer in self.layers for s in layer.kink_state())

    def backward(self, dy, *, pre_activation=False):
        for i, (_, layer) in enumerate(reversed(self.layers)):
            dy = layer.backward(dy, pre_activation=pre_activation and i == 0)
        return dy

    def __call__(self, x):
        return self.forward(x)


class Generator(_Stack):
    def __init__(self, output_dim, rng=None, output_activation="relu"):
        rng = np.random.default_rng(0) if rng is None else rng
        act = "relu" if output_activation == "relu" else "none"
        self.output_dim = output_dim
        self.output_activation = output_activation
        super().__init__([("dense1", Dense(NOISE_DIM, HIDDEN, "relu", rng)),
                          ("dense2", Dense(HIDDEN, output_dim, act, rng))])

    def forward(self, noise):
        noise = np.asarray(noise)
        if noise.ndim != 2 or noise.shape[1] != NOISE_DIM:
            raise ShapeError(f"generator expects noise of shape [batch, {NOISE_DIM}], got {noise.shape}")
        h = self.layers[0][1].forward(noise)
        # Reshape to the tabular row is the identity here.
        return self.layers[1][1].forward(h)


class Discriminator(_Stack):
    def __init__(self, input_dim, n_classes, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.input_dim = input_dim
        self.n_classes = n_classes
        super().__init__([("dense1", Dense(input_dim, HIDDEN, "relu", rng)),
                          ("head", Dense(HIDDEN, n_classes, "softmax", rng))])

    def forward(self, x):
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"discriminator expects [batch, {self.input_dim}], got {x.shape}")
        return self.layers[1][1].forward(self.layers[0][1].forward(x))

    def logits(self):
        return self.layers[1][1]._z


def generator_forward(noise, gen):
    return gen.forward(noise)


def discriminator_forward(x, disc):
    return disc.forward(x)


def _ce_from_logits(z, y, k):
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(z.shape[0]), y]))
    return loss, (softmax(z) - one_hot(y, k)) / z.shape[0]


def fake_proxy_label(y, n_classes, target_class):
    """Most populous class other than ``target_class`` (lowest index on ties)."""
    counts = np.bincount(y, minlength=n_classes).astype(np.int64)
    counts[target_class] = -1
    return int(np.argmax(counts))


def discriminator_step(gen, disc, real_X, real_y, noise, fake_label, opt):
    disc.zero_grad()
    fake = gen.forward(noise)
    X = np.vstack([real_X, fake])
    y = np.concatenate([real_y, np.full(fake.shape[0], fake_label)])
    disc.forward(X)
    loss, dz = _ce_from_logits(disc.logits(), y, disc.n_classes)
    disc.backward(dz, pre_activation=True)
    opt.step(disc.params, disc.grads)
    return loss


def generator_loss(gen, disc, noise, target_class):
    disc.forward(gen.forward(noise))
    return _ce_from_logits(disc.logits(), np.full(noise.shape[0], target_class), disc.n_classes)[0]


def generator_step(gen, disc, noise, target_class, opt):
    """One Adam step on the generator; discriminator parameters are left untouched."""
    gen.zero_grad()
    fake = gen.forward(noise)
    disc.forward(fake)
    loss, dz = _ce_from_logits(disc.logits(), np.full(noise.shape[0], target_class), disc.n_classes)
    dfake = disc.backward(dz, pre_activation=True)
    gen.backward(dfake)
    opt.step(gen.params, gen.grads)
    return loss


def train_gan(real, cfg):
    """Adversarial training for one target class.

    Returns ``(generator, discriminator, history)`` where history maps
    ``"d_loss"`` and ``"g_loss"`` to per-step lists.
    """
    if len(real) == 0 or not np.any(real.y == cfg.target_class):
        raise ConfigError(f"target class {cfg.target_class} has no rows in the real data")
    k = real.codec.n_classes
    rng = np.random.default_rng(cfg.seed)
    gen = Generator(real.n_features, rng, cfg.output_activation)
    disc = Discriminator(real.n_features, k, rng)
    g_opt = cfg.optimizer()
    d_opt = cfg.optimizer(cfg.d_lr)
    fake_label = fake_proxy_label(real.y, k, cfg.target_class)
    history = {"d_loss": [], "g_loss": []}
    for step in range(cfg.steps):
        idx = rng.integers(0, len(real), size=cfg.batch_size)
        noise = rng.standard_normal((cfg.batch_size, NOISE_DIM))
        try:
            d_loss = discriminator_step(gen, disc, real.X[idx], real.y[idx], noise, fake_label, d_opt)
            noise = rng.standard_normal((cfg.batch_size, NOISE_DIM))
            g_loss = generator_step(gen, disc, noise, cfg.target_class, g_opt)
        except TrainingError as exc:
            raise TrainingError(f"GAN step {step}: {exc}") from exc
        if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
            raise TrainingError(f"non-finite GAN loss at step {step}")
        history["d_loss"].append(d_loss)
        history["g_loss"].append(g_loss)
    gen.optimizer, disc.optimizer = g_opt, d_opt
    gen.target_class = cfg.target_class
    return gen, disc, history


def synthesize(gen, class_idx, n, seed=0):
    """``n`` generated rows and their labels (all ``class_idx``)."""
    if n < 0:
        raise ParameterError(f"number of samples must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.zeros((0, gen.output_dim)), np.zeros(0, dtype=np.int64)
    X = gen.forward(rng.standard_normal((n, NOISE_DIM)))
    return np.array(X), np.full(n, class_idx, dtype=np.int64)


def class_deficits(y, n_classes):
    counts = np.bincount(y, minlength=n_classes)
    return counts.max() - counts


def augment_dataset(real, generators, seed=0, strategy="majority"):
    """Upsample every minority class to the majority count with generated rows.

    The result carries a boolean ``provenance`` array (True = synthetic).  Real
    rows are copied unchanged.  When no class needs samples the input order is
    kept; otherwise the combined rows are shuffled with ``seed``.
    """
    if strategy != "majority":
        raise ConfigError(f"unknown augmentation strategy {strategy!r}")
    k = real.codec.n_classes
    deficits = class_deficits(real.y, k)
    Xs, ys = [real.X], [real.y]
    prov = [np.zeros(len(real), dtype=bool)]
    for cls in range(k):
        if deficits[cls] == 0:
            continue
        if cls not in generators:
            raise ConfigError(f"class {cls} needs {deficits[cls]} synthetic rows but has no generator")
        sub_seed = int(np.random.SeedSequence([seed, cls]).generate_state(1)[0])
        X, y = synthesize(generators[cls], cls, int(deficits[cls]), sub_seed)
        Xs.append(X)
        ys.append(y)
        prov.append(np.ones(len(y), dtype=bool))
    out = Dataset(np.vstack(Xs), np.concatenate(ys), list(real.feature_names), real.codec, np.concatenate(prov))
    if len(Xs) == 1:
        return out
    return out.take(np.random.default_rng(seed).permutation(len(out)))


# ---------------------------------------------------------------- persistence

def save_gan(path, gen, disc, cfg, history=None):
    meta = {
        "kind": "gan",
        "config": asdict(cfg),
        "output_dim": gen.output_dim,
        "n_classes": disc.n_classes,
        "history": history or {"d_loss": [], "g_loss": []},
    }
    arrays = {f"gen.{k}": v for k, v in gen.params.items()}
    arrays.update({f"disc.{k}": v for k, v in disc.params.items()})
    for prefix, obj in (("gen_adam", gen), ("disc_adam", disc)):
        opt = getattr(obj, "optimizer", None)
        if opt is not None:
            arrays.update(checkpoint.optimizer_arrays(opt, prefix))
            meta[prefix] = {**opt.hyperparameters(), "t": opt.t}
    checkpoint.save(path, meta, arrays)


def load_gan(path):
    meta, arrays = checkpoint.load(path)
    if meta.get("kind") != "gan":
        raise CheckpointError(f"{path} holds a {meta.get('kind')!r} checkpoint, not a gan")
    cfg = GanTrainConfig(**meta["config"])
    gen = Generator(meta["output_dim"], None, cfg.output_activation)
    disc = Discriminator(meta["output_dim"], meta["n_classes"])
    gen.load_params({k[4:]: v for k, v in arrays.items() if k.startswith("gen.")})
    disc.load_params({k[5:]: v for k, v in arrays.items() if k.startswith("disc.")})
    for prefix, obj in (("gen_adam", gen), ("disc_adam", disc)):
        if prefix in meta:
            h = meta[prefix]
            opt = Adam(h["lr"], h["beta1"], h["beta2"], h["epsilon"])
            opt.t = h["t"]
            obj.optimizer = checkpoint.restore_optimizer(opt, arrays, prefix)
    gen.target_class = cfg.target_class
    return gen, disc, cfg, meta["history"]
