"""
Layers, losses and a gradient check
===================================

Every layer has a forward and a backward pass.  The finite-difference checker
compares the two, which is the quickest way to trust a new layer.
"""

import numpy as np

from ganids.nn import BiLSTM, Conv1D, Dense, MaxPool1D, grad_check, softmax

rng = np.random.default_rng(0)

# A batch of two flow records, read as length-10 sequences with one channel.
x = rng.standard_normal((2, 10, 1))

conv = Conv1D(1, 4, 3, "relu", rng)
pool = MaxPool1D(2)
lstm = BiLSTM(4, 3, True, rng)

h = lstm.forward(pool.forward(conv.forward(x)))
print("conv -> pool -> bilstm output shape:", h.shape)

# Softmax keeps large logits finite.
print("softmax([1000, 0, 0]) =", softmax(np.array([[1000.0, 0.0, 0.0]])))

# Relative error between analytic and numeric gradients, per layer.
for name, layer, inp in [("dense", Dense(5, 3, "softmax", rng), rng.standard_normal((2, 5))),
                         ("conv1d", Conv1D(1, 4, 3, "relu", rng), x),
                         ("bilstm", BiLSTM(4, 3, True, rng), rng.standard_normal((2, 4, 4)))]:
    print(f"{name:7s} max relative error {grad_check(layer, inp, 1e-5):.2e}")
