"""Local surrogate explanations for single predictions.

For an instance ``x`` the model is probed on Gaussian perturbations of ``x``
(in the already standard-scaled feature space).  Each probe is weighted by
``exp(-dist^2 / width^2)`` and a sparse linear model is fitted to the
probability of the explained class: greedy forward selection picks up to
``top_k`` features by weighted squared-error reduction, then a lightly damped
weighted least-squares fit gives the final coefficients.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError

LOW_FIDELITY_R2 = 0.5


@dataclass
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # None -> 0.75 * sqrt(d)
    top_k: int = 10
    seed: int = 0
    perturbation_scale: float = 1.0
    damping: float = 1e-8

    def __post_init__(self):
        if self.n_samples < 10:
            raise ParameterError(f"n_samples must be >= 10, got {self.n_samples}")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ParameterError(f"kernel_width must be > 0, got {self.kernel_width}")
        if self.top_k < 1:
            raise ParameterError(f"top_k must be >= 1, got {self.top_k}")

    def width_for(self, d):
        return 0.75 * np.sqrt(d) if self.kernel_width is None else self.kernel_width


@dataclass
class Explanation:
    instance_id: int
    explained_class: int
    probabilities: list
    features: list  # [(name, weight)], |weight| descending
    intercept: float
    r2: float
    class_name: str = ""
    config: dict = field(default_factory=dict)

    @property
    def low_fidelity(self):
        return not self.r2 >= LOW_FIDELITY_R2

    def to_json(self):
        return {
            "instance_id": self.instance_id,
            "class": self.explained_class,
            "class_name": self.class_name,
            "probabilities": list(self.probabilities),
            "features": [{"name": n, "weight": w} for n, w in self.features],
            "intercept": self.intercept,
            "r2": self.r2,
            "low_fidelity": self.low_fidelity,
            "config": self.config,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def render(self, width=30):
        """Signed bar list, one feature per line."""
        label = self.class_name or str(self.explained_class)
        probs = ", ".join(f"{p:.4f}" for p in self.probabilities)
        lines = [
            f"instance {self.instance_id}  class {label}",
            f"probabilities [{probs}]",
            f"intercept {self.intercept:+.5f}  fidelity R^2 {self.r2:.4f}",
        ]
        if self.low_fidelity:
            lines.append(f"WARNING: low-fidelity surrogate (R^2 < {LOW_FIDELITY_R2})")
        scale = max((abs(w) for _, w in self.features), default=0.0) or 1.0
        name_w = max((len(n) for n, _ in self.features), default=0)
        for name, w in self.features:
            n = int(round(abs(w) / scale * width))
            bar = ("+" if w >= 0 else "-") * n
            lines.append(f"{name:>{name_w}} {w:+.6f} {bar}")
        return "\n".join(lines) + "\n"


def perturb(instance, cfg):
    """Row 0 is the instance; the rest add N(0, scale^2) noise. Returns ``(samples, distances)``."""
    x = np.asarray(instance, dtype=np.float64).reshape(-1)
    rng = np.random.default_rng(cfg.seed)
    noise = rng.standard_normal((cfg.n_samples - 1, x.size)) * cfg.perturbation_scale
    samples = np.vstack([x, x + noise])
    return samples, np.sqrt(((samples - x) ** 2).sum(axis=1))


def proximity_kernel(distance, width):
    if width <= 0:
        raise ParameterError(f"kernel width must be > 0, got {width}")
    d = np.asarray(distance, dtype=np.float64)
    return np.exp(-(d * d) / (width * width))


def _wls(X, y, w, damping):
    """Weighted least squares with intercept; the intercept is not damped."""
    sw = w.sum()
    xm = w @ X / sw
    ym = w @ y / sw
    Xc = X - xm
    A = Xc.T @ (Xc * w[:, None]) + damping * np.eye(X.shape[1])
    coef = np.linalg.solve(A, Xc.T @ (w * (y - ym))) if X.shape[1] else np.zeros(0)
    return coef, float(ym - xm @ coef)


def _weighted_sse(X, y, w, damping):
    coef, b = _wls(X, y, w, damping)
    r = y - X @ coef - b
    return float(w @ (r * r))


def weighted_r2(y, pred, w):
    ym = w @ y / w.sum()
    ss_tot = float(w @ ((y - ym) ** 2))
    ss_res = float(w @ ((y - pred) ** 2))
    tiny = 1e-20 * float(w.sum()) * (1.0 + ym * ym)
    if ss_tot <= tiny:
        # constant target: a perfect fit up to rounding counts as R^2 = 1
        return 1.0 if ss_res <= tiny else 0.0
    return 1.0 - ss_res / ss_tot


def fit_surrogate(samples, target, weights, top_k, damping=1e-8):
    """Forward-select up to ``top_k`` features, then weighted least squares on them.

    Returns ``(selected, coef, intercept, r2)`` with ``selected`` in the order
    the features were picked.
    """
    X = np.asarray(samples, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not np.any(w > 0):
        raise ParameterError("all proximity weights are zero; nothing to fit")
    pos = w > 0
    X, y, w = X[pos], y[pos], w[pos]
    d = X.shape[1]
    top_k = min(top_k, d)
    selected = []
    if top_k == d:
        selected = list(range(d))
    else:
        for _ in range(top_k):
            best, best_sse = None, np.inf
            for j in range(d):
                if j in selected:
                    continue
                sse = _weighted_sse(X[:, selected + [j]], y, w, damping)
                if sse < best_sse:
                    best, best_sse = j, sse
            selected.append(best)
    coef, intercept = _wls(X[:, selected], y, w, damping)
    r2 = weighted_r2(y, X[:, selected] @ coef + intercept, w)
    return np.array(selected, dtype=np.int64), coef, intercept, r2


def class_probabilities(model, X):
    """``[n, K]`` class probabilities from a model or a plain callable.

    A single-column output is read as the positive-class probability of a
    binary model and expanded to ``[1 - p, p]``.
    """
    fn = model.predict_proba if hasattr(model, "predict_proba") else model
    p = np.asarray(fn(X), dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[1] == 1:
        p = np.hstack([1.0 - p, p])
    return p


def explain_instance(model, instance, class_idx, cfg=None, feature_names=None, instance_id=0, class_names=None):
    cfg = cfg or LimeConfig()
    x = np.asarray(instance, dtype=np.float64).reshape(-1)
    d = x.size
    if not 1 <= cfg.top_k <= d:
        raise ParameterError(f"top_k must be in [1, {d}], got {cfg.top_k}")
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(d)]
    samples, dist = perturb(x, cfg)
    probs = class_probabilities(model, samples)
    if not 0 <= class_idx < probs.shape[1]:
        raise ParameterError(f"class index {class_idx} out of range for {probs.shape[1]} classes")
    weights = proximity_kernel(dist, cfg.width_for(d))
    sel, coef, intercept, r2 = fit_surrogate(samples, probs[:, class_idx], weights, cfg.top_k, cfg.damping)
    order = sorted(range(len(sel)), key=lambda i: (-abs(coef[i]), sel[i]))
    feats = [(names[sel[i]], float(coef[i])) for i in order]
    exp = Explanation(
        instance_id=int(instance_id),
        explained_class=int(class_idx),
        probabilities=[float(p) for p in probs[0]],
        features=feats,
        intercept=float(intercept),
        r2=float(r2),
        class_name=class_names[class_idx] if class_names else "",
        config={**asdict(cfg), "kernel_width": float(cfg.width_for(d))},
    )
    if exp.low_fidelity:
        warnings.warn(f"instance {instance_id}: surrogate fidelity R^2={r2:.3f} is below {LOW_FIDELITY_R2}")
    return exp
