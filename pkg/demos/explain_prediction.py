"""
Explaining one prediction
=========================

A local linear surrogate is fitted around one instance.  With a model whose
true local slope is known (a linear softmax) the attributions can be checked
against it.
"""

import numpy as np

from ganids.lime import LimeConfig, explain_instance
from ganids.nn import softmax

rng = np.random.default_rng(3)
W = 0.5 * rng.standard_normal((6, 3))
model = lambda X: softmax(X @ W)  # noqa: E731

x = rng.standard_normal(6)
names = ["duration", "src_bytes", "dst_bytes", "dns_ttl", "pkt_count", "flags"]
exp = explain_instance(model, x, 2, LimeConfig(n_samples=3000, top_k=4, seed=0), names,
                       class_names=["Acceptable", "Unrated", "Unsafe"])
print(exp.render())

# The slope of p_2 at x is p_2 * (W[:, 2] - W @ p).  The surrogate averages the
# slope over a neighbourhood of radius about 1, so magnitudes differ while the
# signs and the ordering agree.
p = model(x[None])[0]
true = p[2] * (W[:, 2] - W @ p)
for name, w in exp.features:
    print(f"{name:10s} surrogate {w:+.4f}   true slope {true[names.index(name)]:+.4f}")
