"""Small differentiable-layer library on top of numpy.

Every layer keeps its parameters in ``layer.params`` (name -> float64 array)
and, after ``backward``, the matching gradients in ``layer.grads``.  Arrays
are laid out batch-first: dense inputs are ``[batch, features]``, sequence
inputs are ``[batch, time, channels]``.

The module-level ``*_forward`` functions are the pure versions of the layer
maths and are what the layer classes call.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError, TrainingError, LabelError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "tanh", "none")
PROB_CLIP = 1e-7
GATES = ("i", "f", "o", "g")


def as_float(x):
    """float64 array, except that extended-precision input is left as is (used by grad_check)."""
    arr = np.asarray(x)
    return arr if arr.dtype == np.longdouble else arr.astype(np.float64, copy=False)


# ---------------------------------------------------------------- activations

def sigmoid(z):
    z = as_float(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    """Row-wise softmax over the last axis, computed with max subtraction."""
    z = as_float(z)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return sigmoid(z)
    if activation == "softmax":
        return softmax(z)
    if activation == "tanh":
        return np.tanh(z)
    if activation == "none":
        return z
    raise ParameterError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


def _activation_backward(dy, z, y, activation):
    if activation == "relu":
        return dy * (z > 0)
    if activation == "sigmoid":
        return dy * y * (1.0 - y)
    if activation == "softmax":
        return y * (dy - np.sum(dy * y, axis=-1, keepdims=True))
    if activation == "tanh":
        return dy * (1.0 - y * y)
    return dy


# ---------------------------------------------------------------- losses

def categorical_crossentropy(pred, target_onehot):
    """Mean over the batch of ``-sum(target * log(clip(pred)))``."""
    pred = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target_onehot, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError(f"target shape {t.shape} does not match prediction shape {pred.shape}")
    if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=-1) == 1)):
        raise LabelError("categorical target rows must be one-hot")
    p = np.clip(pred, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.sum(t * np.log(p)) / pred.shape[0])


def binary_crossentropy(pred, target):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if t.shape != pred.shape:
        raise ShapeError(f"target length {t.size} does not match prediction length {pred.size}")
    if not np.all((t == 0) | (t == 1)):
        raise LabelError("binary targets must be 0 or 1")
    p = np.clip(pred, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))


def one_hot(y, k):
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


# ---------------------------------------------------------------- init

def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------- pure forwards

def dense_forward(x, params, activation="none"):
    """``act(x @ W + b)``; returns ``(y, z)`` where ``z`` is the pre-activation."""
    x = as_float(x)
    W, b = params["W"], params["b"]
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"dense input shape {x.shape} incompatible with weight shape {W.shape}")
    z = x @ W + b
    return _activate(z, activation), z


def _windows(x, k):
    # [B, L, C] -> [B, L-k+1, k, C]
    lout = x.shape[1] - k + 1
    return np.stack([x[:, j:j + lout, :] for j in range(k)], axis=2)


def conv1d_forward(x, params, activation="none"):
    """Valid, stride-1 1-D convolution; ``kernels`` has shape [filters, k, channels]."""
    x = as_float(x)
    K, bias = params["kernels"], params["bias"]
    if x.ndim != 3:
        raise ShapeError(f"conv1d expects [batch, length, channels], got shape {x.shape}")
    n_f, k, c = K.shape
    if x.shape[2] != c:
        raise ShapeError(f"conv1d input has {x.shape[2]} channels, kernels expect {c} (kernels {K.shape})")
    if x.shape[1] < k:
        raise ShapeError(f"sequence length {x.shape[1]} shorter than kernel length {k}")
    win = _windows(x, k)
    z = np.einsum("btkc,fkc->btf", win, K) + bias
    return _activate(z, activation), z


def maxpool1d(x, pool=2):
    """Non-overlapping max pooling along time; a trailing remainder is dropped."""
    if pool <= 0:
        raise ParameterError(f"pool size must be >= 1, got {pool}")
    x = as_float(x)
    b, length, c = x.shape
    lout = length // pool
    blocks = x[:, :lout * pool, :].reshape(b, lout, pool, c)
    return blocks.max(axis=2)


def lstm_cell_forward(x_t, h, c, params):
    """One LSTM step. Returns ``(h_next, c_next, cache)``.

    ``params`` holds ``W_<g>`` [in, hid], ``U_<g>`` [hid, hid], ``b_<g>`` [hid]
    for the gates i, f, o and candidate g.
    """
    hid = params["U_i"].shape[0]
    if h.shape[-1] != hid or c.shape[-1] != hid or x_t.shape[-1] != params["W_i"].shape[0]:
        raise ShapeError(
            f"lstm cell shapes x{x_t.shape} h{h.shape} c{c.shape} do not fit "
            f"W{params['W_i'].shape} U{params['U_i'].shape}"
        )
    pre = {g: x_t @ params["W_" + g] + h @ params["U_" + g] + params["b_" + g] for g in GATES}
    i, f, o = sigmoid(pre["i"]), sigmoid(pre["f"]), sigmoid(pre["o"])
    g = np.tanh(pre["g"])
    c_next = f * c + i * g
    tc = np.tanh(c_next)
    h_next = o * tc
    return h_next, c_next, (x_t, h, c, i, f, o, g, tc)


def lstm_cell_backward(dh_next, dc_next, cache, params, grads):
    """Backprop one step; accumulates into ``grads`` and returns ``(dx, dh, dc)``."""
    x_t, h, c, i, f, o, g, tc = cache
    do = dh_next * tc
    dc = dc_next + dh_next * o * (1.0 - tc * tc)
    dpre = {
        "i": dc * g * i * (1.0 - i),
        "f": dc * c * f * (1.0 - f),
        "o": do * o * (1.0 - o),
        "g": dc * i * (1.0 - g * g),
    }
    dx = np.zeros_like(x_t)
    dh = np.zeros_like(h)
    for k in GATES:
        grads["W_" + k] += x_t.T @ dpre[k]
        grads["U_" + k] += h.T @ dpre[k]
        grads["b_" + k] += dpre[k].sum(axis=0)
        dx += dpre[k] @ params["W_" + k].T
        dh += dpre[k] @ params["U_" + k].T
    return dx, dh, dc * f


def init_lstm_params(rng, in_dim, hidden, forget_bias=1.0):
    p = {}
    for g in GATES:
        p["W_" + g] = glorot_uniform(rng, (in_dim, hidden), in_dim, 4 * hidden)
    for g in GATES:
        p["U_" + g] = glorot_uniform(rng, (hidden, hidden), hidden, 4 * hidden)
    for g in GATES:
        p["b_" + g] = np.full(hidden, forget_bias if g == "f" else 0.0)
    return p


def _lstm_sequence(seq, params):
    b, T, _ = seq.shape
    hid = params["U_i"].shape[0]
    h = np.zeros((b, hid))
    c = np.zeros((b, hid))
    hs, caches = [], []
    for t in range(T):
        h, c, cache = lstm_cell_forward(seq[:, t, :], h, c, params)
        hs.append(h)
        caches.append(cache)
    return np.stack(hs, axis=1), caches


def _lstm_sequence_backward(dhs, caches, params, grads):
    b, T, hid = dhs.shape
    dx = np.zeros((b, T, caches[0][0].shape[1]))
    dh = np.zeros((b, hid))
    dc = np.zeros((b, hid))
    for t in reversed(range(T)):
        dx[:, t, :], dh, dc = lstm_cell_backward(dhs[:, t, :] + dh, dc, caches[t], params, grads)
    return dx


def bilstm_forward(seq, fwd, bwd, return_sequences=True):
    """Bidirectional LSTM from zero initial state.

    With ``return_sequences`` the output is [batch, T, 2*hid], forward
    states first.  Otherwise it is the final forward state concatenated with
    the backward state at t=0, shape [batch, 2*hid].
    """
    seq = as_float(seq)
    if seq.ndim != 3:
        raise ShapeError(f"bilstm expects [batch, time, features], got shape {seq.shape}")
    if seq.shape[1] == 0:
        raise ShapeError("bilstm received an empty sequence (T == 0)")
    hf, _ = _lstm_sequence(seq, fwd)
    hb, _ = _lstm_sequence(seq[:, ::-1, :], bwd)
    hb = hb[:, ::-1, :]
    if return_sequences:
        return np.concatenate([hf, hb], axis=2)
    return np.concatenate([hf[:, -1, :], hb[:, 0, :]], axis=1)


# ---------------------------------------------------------------- layers

class Layer:
    """Base class. Subclasses fill ``params`` and implement forward/backward."""

    def __init__(self):
        self.params = {}
        self.grads = {}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def kink_state(self):
        """Discrete state (ReLU masks, pool winners) of the last forward pass."""
        return ()

    def __call__(self, x):
        return self.forward(x)


class Dense(Layer):
    def __init__(self, in_dim, out_dim, activation="none", rng=None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.activation = activation
        self.params = {"W": glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim), "b": np.zeros(out_dim)}
        self.zero_grad()

    def forward(self, x):
        self._x = as_float(x)
        self._y, self._z = dense_forward(self._x, self.params, self.activation)
        return self._y

    def backward(self, dy, *, pre_activation=False):
        dz = dy if pre_activation else _activation_backward(dy, self._z, self._y, self.activation)
        self.grads["W"] = self.grads["W"] + self._x.T @ dz
        self.grads["b"] = self.grads["b"] + dz.sum(axis=0)
        return dz @ self.params["W"].T

    def kink_state(self):
        return (self._z > 0,) if self.activation == "relu" else ()


class Conv1D(Layer):
    def __init__(self, in_channels, n_filters, kernel_size, activation="none", rng=None):
        super().__init__()
        if n_filters < 1 or kernel_size < 1:
            raise ParameterError("conv1d needs n_filters >= 1 and kernel_size >= 1")
        rng = np.random.default_rng(0) if rng is None else rng
        self.activation = activation
        self.kernel_size = kernel_size
        self.params = {
            "kernels": glorot_uniform(
                rng, (n_filters, kernel_size, in_channels), kernel_size * in_channels, kernel_size * n_filters
            ),
            "bias": np.zeros(n_filters),
        }
        self.zero_grad()

    def forward(self, x):
        self._x = as_float(x)
        self._y, self._z = conv1d_forward(self._x, self.params, self.activation)
        return self._y

    def backward(self, dy):
        dz = _activation_backward(dy, self._z, self._y, self.activation)
        K = self.params["kernels"]
        win = _windows(self._x, self.kernel_size)
        self.grads["kernels"] = self.grads["kernels"] + np.einsum("btf,btkc->fkc", dz, win)
        self.grads["bias"] = self.grads["bias"] + dz.sum(axis=(0, 1))
        dx = np.zeros_like(self._x)
        lout = dz.shape[1]
        for j in range(self.kernel_size):
            dx[:, j:j + lout, :] += dz @ K[:, j, :]
        return dx

    def kink_state(self):
        return (self._z > 0,) if self.activation == "relu" else ()


class MaxPool1D(Layer):
    def __init__(self, pool=2):
        super().__init__()
        if pool <= 0:
            raise ParameterError(f"pool size must be >= 1, got {pool}")
        self.pool = pool

    def forward(self, x):
        x = as_float(x)
        self._shape = x.shape
        b, length, c = x.shape
        lout = length // self.pool
        blocks = x[:, :lout * self.pool, :].reshape(b, lout, self.pool, c)
        self._arg = blocks.argmax(axis=2)
        return blocks.max(axis=2)

    def backward(self, dy):
        b, length, c = self._shape
        lout = dy.shape[1]
        dblocks = np.zeros((b, lout, self.pool, c))
        np.put_along_axis(dblocks, self._arg[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros(self._shape)
        dx[:, :lout * self.pool, :] = dblocks.reshape(b, lout * self.pool, c)
        return dx

    def kink_state(self):
        return (self._arg,)


class LSTM(Layer):
    """Unidirectional LSTM over [batch, T, in] returning all hidden states."""

    def __init__(self, in_dim, hidden, rng=None, forget_bias=1.0):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.hidden = hidden
        self.params = init_lstm_params(rng, in_dim, hidden, forget_bias)
        self.zero_grad()

    def forward(self, seq):
        seq = as_float(seq)
        if seq.ndim != 3 or seq.shape[1] == 0:
            raise ShapeError(f"lstm expects a non-empty [batch, time, features] array, got {seq.shape}")
        hs, self._caches = _lstm_sequence(seq, self.params)
        return hs

    def backward(self, dhs):
        return _lstm_sequence_backward(dhs, self._caches, self.params, self.grads)


class BiLSTM(Layer):
    def __init__(self, in_dim, hidden, return_sequences=True, rng=None, forget_bias=1.0):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.hidden = hidden
        self.return_sequences = return_sequences
        self.fwd = LSTM(in_dim, hidden, rng, forget_bias)
        self.bwd = LSTM(in_dim, hidden, rng, forget_bias)
        self._sync()

    def _sync(self):
        self.params = {**{"fwd." + k: v for k, v in self.fwd.params.items()},
                       **{"bwd." + k: v for k, v in self.bwd.params.items()}}
        self.grads = {**{"fwd." + k: v for k, v in self.fwd.grads.items()},
                      **{"bwd." + k: v for k, v in self.bwd.grads.items()}}

    def zero_grad(self):
        self.fwd.zero_grad()
        self.bwd.zero_grad()
        self._sync()

    def load_params(self, params):
        for k, v in params.items():
            side, name = k.split(".", 1)
            getattr(self, side).params[name] = v
        self._sync()

    def forward(self, seq):
        seq = as_float(seq)
        if seq.ndim != 3:
            raise ShapeError(f"bilstm expects [batch, time, features], got shape {seq.shape}")
        if seq.shape[1] == 0:
            raise ShapeError("bilstm received an empty sequence (T == 0)")
        self._T = seq.shape[1]
        hf = self.fwd.forward(seq)
        hb = self.bwd.forward(seq[:, ::-1, :])[:, ::-1, :]
        if self.return_sequences:
            return np.concatenate([hf, hb], axis=2)
        return np.concatenate([hf[:, -1, :], hb[:, 0, :]], axis=1)

    def backward(self, dy):
        H = self.hidden
        if self.return_sequences:
            dhf, dhb = dy[:, :, :H], dy[:, :, H:]
        else:
            b = dy.shape[0]
            dhf = np.zeros((b, self._T, H))
            dhb = np.zeros((b, self._T, H))
            dhf[:, -1, :] = dy[:, :H]
            dhb[:, 0, :] = dy[:, H:]
        dx = self.fwd.backward(dhf)
        dx = dx + self.bwd.backward(np.ascontiguousarray(dhb[:, ::-1, :]))[:, ::-1, :]
        self._sync()
        return dx


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


# ---------------------------------------------------------------- optimiser

class Adam:
    """Adam with bias correction. Moments are created lazily per parameter name."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = {}
        self.v = {}
        self.t = 0

    def hyperparameters(self):
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}

    def step(self, params, grads):
        """Update ``params`` in place from ``grads`` (same keys and shapes)."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
            if g.shape != params[name].shape:
                raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {params[name].shape}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return params


def adam_step(params, grads, state):
    """Functional spelling of ``state.step(params, grads)``."""
    state.step(params, grads)
    return params, state


# ---------------------------------------------------------------- gradient check

def _relative_error(a, n):
    return abs(a - n) / max(1e-8, abs(a) + abs(n))


def grad_check(target, x, eps=1e-5, *, loss=None, seed=0, max_coords=None, check_input=True,
               extended=True):
    """Largest relative error between analytic and central-difference gradients.

    ``target`` is anything with ``forward``, ``backward``, ``params``,
    ``grads``, ``zero_grad`` and ``kink_state`` (a layer or a whole model).
    ``loss(out) -> (value, dout)`` defaults to a fixed random projection of the
    output.  Coordinates whose +/-eps perturbation flips a ReLU mask or a
    pooling winner are skipped.  ``max_coords`` caps how many coordinates per
    array are probed (chosen with a seeded generator).

    The analytic pass runs in float64.  With ``extended`` the finite
    differences are evaluated on a long-double copy of the input so that
    rounding noise stays far below the gradients being checked.
    """
    if not 0 < eps <= 1e-2:
        raise ParameterError(f"eps must be in (0, 1e-2], got {eps}")
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)

    if loss is None:
        proj = rng.standard_normal(target.forward(x).shape)

        def loss(out):
            return np.sum(out * proj), proj

    target.zero_grad()
    out = target.forward(x)
    base_kinks = [np.array(s, copy=True) for s in target.kink_state()]
    _, dout = loss(out)
    dx = target.backward(dout)
    analytic = {"__input__": dx} if check_input else {}
    analytic.update({k: np.array(v, copy=True) for k, v in target.grads.items()})

    xn = x.astype(np.longdouble) if extended else x.copy()

    def evaluate():
        value = loss(target.forward(xn))[0]
        return value, [np.array(s, copy=True) for s in target.kink_state()]

    arrays = {"__input__": xn} if check_input else {}
    arrays.update(target.params)

    worst = 0.0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        g = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = flat[i]
            fp, kp = evaluate()
            flat[i] = orig - eps
            down = flat[i]
            fm, km = evaluate()
            flat[i] = orig
            if any(not np.array_equal(a, b) for a, b in zip(base_kinks + base_kinks, kp + km)):
                continue
            numeric = float((fp - fm) / (np.longdouble(up) - np.longdouble(down)))
            worst = max(worst, _relative_error(float(g[i]), numeric))
    target.forward(x)
    return worst
