"""
Reverse-mode autodiff on numpy arrays
=====================================

Build a tiny graph, run backward, and confirm the gradients with central
finite differences.
"""

import numpy as np

from aamtsa import autodiff as ad
from aamtsa.autodiff import Parameter, Tensor

rng = np.random.default_rng(0)

# A linear layer followed by softmax cross-entropy.
x = Tensor(rng.normal(size=(4, 3)))
W = Parameter(rng.normal(size=(3, 5)), "W")
b = Parameter(np.zeros(5), "b")
loss = ad.cross_entropy(ad.linear(x, W, b), [0, 2, 4, 1])
ad.backward(loss)
print("loss", loss.item())
print("dL/db", np.round(b.grad, 4))

# The analytic gradient of mean cross-entropy w.r.t. the bias is the mean of
# (softmax - onehot); check it by hand.
z = x.data @ W.data
p = np.exp(z - z.max(1, keepdims=True))
p /= p.sum(1, keepdims=True)
p[np.arange(4), [0, 2, 4, 1]] -= 1
print("closed form matches:", np.allclose(b.grad, p.mean(0)))

# Finite-difference check over every coordinate.
rep = ad.grad_check(lambda: ad.cross_entropy(ad.linear(x, W, b), [0, 2, 4, 1]), [W, b])
print(f"grad check: max rel err {rep.max_rel_err:.2e}, passed={rep.passed}")

# Multi-head attention is one fused primitive with its own backward.
q = Parameter(rng.normal(size=(2, 3, 8)), "q")
kv = Parameter(rng.normal(size=(2, 5, 8)), "kv")
weights = []
out = ad.attention(q, kv, kv, n_heads=2, weights_out=weights)
print("attention out", out.shape, "weights", weights[0].shape, "rows sum to 1:",
      np.allclose(weights[0].sum(-1), 1))
