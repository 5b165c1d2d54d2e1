"""
Checking reverse-mode gradients
===============================

The autodiff engine is small enough to audit by hand, but the quickest way to
trust it is to compare it against central finite differences.
"""

import numpy as np

from nstlab import losses, ndgrad
from nstlab.nnmodel import ModelConfig, init_params, predict_proba

rng = np.random.default_rng(0)

# a two-hidden-layer network and a handful of random points
params = init_params(ModelConfig((3, 8, 8, 4), seed=1))
X = rng.normal(size=(10, 3))
y = rng.integers(0, 4, size=10)


def loss(tensors):
    return losses.cross_entropy(predict_proba(params.replace(tensors), X), y)


auto = ndgrad.backward(loss(params.tensors()), params.tensors())
numeric = ndgrad.finite_diff_grad(loss, params.tensors(), h=1e-5)

# relative error per parameter block
for i, p in enumerate(params.tensors()):
    a, b = auto[p], numeric[p]
    err = np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-8))
    print(f"block {i} {str(p.shape):>8}  max relative error {err:.1e}")

# the graph is freed after backward, so a second call on the same loss fails
value = loss(params.tensors())
ndgrad.backward(value, params.tensors())
try:
    ndgrad.backward(value, params.tensors())
except KeyError as exc:
    print("second backward:", exc)
