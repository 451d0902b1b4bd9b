"""First-order update rules: sgd, adagrad, rmsprop, adam, adamax, nadam.

Updates are applied in place to every trainable parameter of a model.
Frozen layers are skipped entirely and never get slot tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LayerStateError, ParameterError

OPTIMIZERS = ("adagrad", "adam", "adamax", "nadam", "rmsprop", "sgd")

_SLOTS = {
    "sgd": (),
    "adagrad": ("accum",),
    "rmsprop": ("accum",),
    "adam": ("m", "v"),
    "adamax": ("m", "u"),
    "nadam": ("m", "v"),
}


@dataclass
class Optimizer:
    kind: str = "adam"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in _SLOTS:
            raise ParameterError(f"unknown optimizer {self.kind!r}; choose from {', '.join(OPTIMIZERS)}")
        if self.lr < 0:
            raise ParameterError("learning rate must be non-negative")
        self.t = 0
        self.slots: dict[tuple[str, str], dict[str, np.ndarray]] = {}

    def reset(self):
        self.t = 0
        self.slots = {}

    def _slot(self, key, param):
        s = self.slots.get(key)
        if s is None:
            s = self.slots[key] = {name: np.zeros_like(param) for name in _SLOTS[self.kind]}
        return s

    def apply_step(self, model):
        pending = []
        for layer, pname in model.parameters(trainable_only=True):
            g = layer.grads.get(pname)
            if g is None:
                raise LayerStateError(
                    f"{layer.name}/{pname} has no gradient; run backward before apply_step"
                )
            pending.append((layer, pname, g))
        self.t += 1
        for layer, pname, g in pending:
            p = layer.params[pname]
            self._update(p, g, self._slot((layer.name, pname), p))

    def _update(self, p, g, s):
        """Update ``p`` in place; constants are cast to p's dtype first."""
        f = p.dtype.type
        lr, eps, t = f(self.lr), f(self.eps), self.t
        k = self.kind
        if k == "sgd":
            p -= lr * g
        elif k == "adagrad":
            s["accum"] += g * g
            p -= lr * g / (np.sqrt(s["accum"]) + eps)
        elif k == "rmsprop":
            rho = f(self.rho)
            s["accum"] *= rho
            s["accum"] += (f(1) - rho) * g * g
            p -= lr * g / (np.sqrt(s["accum"]) + eps)
        else:
            b1, b2 = f(self.beta1), f(self.beta2)
            s["m"] *= b1
            s["m"] += (f(1) - b1) * g
            c1 = f(1.0 - self.beta1 ** t)
            m_hat = s["m"] / c1
            if k == "adamax":
                np.maximum(b2 * s["u"], np.abs(g), out=s["u"])
                p -= lr * m_hat / (s["u"] + eps)
                return
            s["v"] *= b2
            s["v"] += (f(1) - b2) * g * g
            v_hat = s["v"] / f(1.0 - self.beta2 ** t)
            if k == "nadam":
                m_hat = b1 * m_hat + (f(1) - b1) * g / c1
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)

    def describe(self) -> dict:
        return {
            "kind": self.kind, "lr": self.lr, "beta1": self.beta1,
            "beta2": self.beta2, "rho": self.rho, "eps": self.eps,
        }
