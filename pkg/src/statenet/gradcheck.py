"""Central finite-difference checks for layer backward passes.

Checks run on a float64 copy of the layer so the comparison measures the
backward math, not float32 rounding.
"""

from __future__ import annotations

import copy

import numpy as np

from .layers import softmax_xent


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def check_layer(layer, x, *, training=False, seed=0, eps=1e-3, dtype=np.float64, rng=None):
    """Compare a layer's analytic gradients with finite differences.

    The scalar objective is ``sum(forward(x) * R)`` for a fixed random ``R``.
    Stochastic layers get a freshly seeded rng on every forward call, so the
    dropout mask stays fixed while inputs are perturbed.  Returns a dict
    mapping ``"x"`` and each parameter name to its max relative error.
    """
    layer = copy.deepcopy(layer).astype(dtype)
    layer.trainable = True
    x = np.array(x, dtype=dtype)
    rng = rng if rng is not None else np.random.default_rng(seed + 1)

    def fwd():
        return layer.forward(x, training=training, rng=np.random.default_rng(seed))

    proj = rng.uniform(-1, 1, size=fwd().shape).astype(dtype)

    def objective():
        return float((fwd() * proj).sum())

    fwd()
    dx = layer.backward(proj.copy())
    errors = {"x": relative_error(dx, numeric_gradient(objective, x, eps))}
    for name in layer.params:
        analytic = layer.grads[name].copy()
        errors[name] = relative_error(analytic, numeric_gradient(objective, layer.params[name], eps))
    return errors


def check_softmax_xent(logits, labels, eps=1e-3) -> float:
    logits = np.array(logits, dtype=np.float64)
    _, _, dlogits = softmax_xent(logits, labels)
    numeric = numeric_gradient(lambda: softmax_xent(logits, labels)[0], logits, eps)
    return relative_error(dlogits, numeric)


def check_model(model, x, labels, *, training=False, seed=0, eps=1e-3):
    """End-to-end check of input and parameter gradients for a whole model."""
    model = copy.deepcopy(model).astype(np.float64)
    for layer in model.layers:
        layer.trainable = True
    x = np.array(x, dtype=np.float64)

    def objective():
        logits = model.forward(x, training=training, rng=np.random.default_rng(seed))
        return softmax_xent(logits, labels)[0]

    logits = model.forward(x, training=training, rng=np.random.default_rng(seed))
    _, _, dlogits = softmax_xent(logits, labels)
    dx = model.input_gradient(dlogits)
    errors = {"x": relative_error(dx, numeric_gradient(objective, x, eps))}
    for layer, pname in model.parameters():
        analytic = layer.grads[pname].copy()
        errors[f"{layer.name}/{pname}"] = relative_error(
            analytic, numeric_gradient(objective, layer.params[pname], eps)
        )
    return errors
