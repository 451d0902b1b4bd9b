"""Layers with hand-written forward and backward passes.

Every layer keeps its parameters and gradients in dicts keyed by parameter
name (``weight``, ``bias``).  Forward calls stash whatever backward needs on
the layer itself, so a layer instance belongs to one thread at a time.
Computation happens in the parameters' dtype; :meth:`Layer.astype` switches
a layer to float64 for gradient checking.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import LayerStateError, ParameterError, ShapeError
from .tensor import DTYPE, add_channel_bias, col2im, im2col, matmul


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=DTYPE) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    kind = "layer"

    def __init__(self, name: str | None = None):
        self.name = name or self.kind
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray | None] = {}
        self.trainable = True
        self._cache = None

    @property
    def has_params(self) -> bool:
        return bool(self.params)

    @property
    def hyper(self) -> dict:
        return {}

    def output_shape(self, in_shape: tuple) -> tuple:
        """Per-sample output shape for a per-sample input shape."""
        return tuple(in_shape)

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, need_dx=True):
        raise NotImplementedError

    def zero_grad(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def astype(self, dtype):
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
            if self.grads.get(k) is not None:
                self.grads[k] = self.grads[k].astype(dtype)
        return self

    def _cached(self):
        if self._cache is None:
            raise LayerStateError(f"{self.name}: backward called before forward")
        return self._cache

    def __repr__(self):
        hyper = ", ".join(f"{k}={v}" for k, v in self.hyper.items())
        frozen = "" if self.trainable or not self.has_params else ", frozen"
        return f"{type(self).__name__}({self.name!r}{', ' + hyper if hyper else ''}{frozen})"


class Conv2D(Layer):
    """Stride-1 'same' convolution; weight layout is (kh, kw, cin, cout)."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel=3, *, rng=None, name=None):
        super().__init__(name)
        if kernel % 2 != 1:
            raise ParameterError("same padding needs an odd kernel size")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad = (kernel - 1) // 2
        fan_in = kernel * kernel * in_channels
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = kaiming_uniform(
            rng, (kernel, kernel, in_channels, out_channels), fan_in
        )
        self.params["bias"] = np.zeros(out_channels, dtype=DTYPE)
        self.grads = {"weight": None, "bias": None}

    @property
    def hyper(self):
        return {"kernel": self.kernel, "filters": self.out_channels}

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.in_channels:
            raise ShapeError(f"{self.name}: expects {self.in_channels} channels, got {c}")
        return (h, w, self.out_channels)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(
                f"{self.name}: input {x.shape} does not match weight "
                f"{self.params['weight'].shape} (cin={self.in_channels})"
            )
        n, h, w, _ = x.shape
        k = self.kernel
        cols = im2col(x, k, k, 1, self.pad)
        wmat = self.params["weight"].reshape(-1, self.out_channels)
        y = add_channel_bias(matmul(cols, wmat), self.params["bias"])
        self._cache = x
        return y.reshape(n, h, w, self.out_channels)

    def backward(self, dy, need_dx=True):
        x = self._cached()
        k = self.kernel
        dy2 = dy.reshape(-1, self.out_channels)
        wmat = self.params["weight"].reshape(-1, self.out_channels)
        if self.trainable:
            cols = im2col(x, k, k, 1, self.pad)
            self.grads["weight"] = matmul(cols.T, dy2).reshape(self.params["weight"].shape)
            self.grads["bias"] = dy2.sum(axis=0)
        if not need_dx:
            return None
        return col2im(matmul(dy2, wmat.T), x.shape, k, k, 1, self.pad)


class MaxPool2D(Layer):
    """2x2 / stride-2 max pooling; odd trailing rows/columns are dropped."""

    kind = "maxpool2d"
    size = 2

    @property
    def hyper(self):
        return {"pool": self.size}

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if h < 2 or w < 2:
            raise ShapeError(f"{self.name}: cannot pool a {h}x{w} map")
        return (h // 2, w // 2, c)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected NHWC input, got {x.shape}")
        n, h, w, c = x.shape
        oh, ow, _ = self.output_shape((h, w, c))
        xc = x[:, : oh * 2, : ow * 2, :]
        # window elements in row-major (dy, dx) order along the last axis
        win = xc.reshape(n, oh, 2, ow, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, c, 4)
        idx = win.argmax(axis=-1)  # first maximum wins ties
        self._cache = (x.shape, idx)
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy, need_dx=True):
        shape, idx = self._cached()
        if not need_dx:
            return None
        n, h, w, c = shape
        oh, ow = h // 2, w // 2
        routed = np.zeros((n, oh, ow, c, 4), dtype=dy.dtype)
        np.put_along_axis(routed, idx[..., None], dy[..., None], axis=-1)
        routed = routed.reshape(n, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(shape, dtype=dy.dtype)
        dx[:, : oh * 2, : ow * 2, :] = routed.reshape(n, oh * 2, ow * 2, c)
        return dx


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, units, *, rng=None, name=None):
        super().__init__(name)
        self.in_features = in_features
        self.units = units
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = kaiming_uniform(rng, (in_features, units), in_features)
        self.params["bias"] = np.zeros(units, dtype=DTYPE)
        self.grads = {"weight": None, "bias": None}

    @property
    def hyper(self):
        return {"units": self.units}

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"{self.name}: expects ({self.in_features},), got {tuple(in_shape)}")
        return (self.units,)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"{self.name}: input {x.shape} does not match weight {self.params['weight'].shape}"
            )
        self._cache = x
        return add_channel_bias(matmul(x, self.params["weight"]), self.params["bias"])

    def backward(self, dy, need_dx=True):
        x = self._cached()
        if self.trainable:
            self.grads["weight"] = matmul(x.T, dy)
            self.grads["bias"] = dy.sum(axis=0)
        if not need_dx:
            return None
        return matmul(dy, self.params["weight"].T)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, need_dx=True):
        shape = self._cached()
        return dy.reshape(shape) if need_dx else None


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dy, need_dx=True):
        mask = self._cached()
        return dy * mask if need_dx else None


class Dropout(Layer):
    """Inverted dropout: scaled at train time, identity at inference."""

    kind = "dropout"

    def __init__(self, p: float, name=None):
        super().__init__(name)
        if not 0.0 <= p < 1.0:
            raise ParameterError(f"dropout rate must lie in [0, 1), got {p}")
        self.p = float(p)

    @property
    def hyper(self):
        return {"p": self.p}

    def forward(self, x, training=False, rng=None):
        if not training or self.p == 0.0:
            self._cache = 1  # identity marker
            return x
        if rng is None:
            raise LayerStateError(f"{self.name}: training-mode dropout needs an rng")
        keep = rng.random(x.shape) >= self.p
        scale = x.dtype.type(1.0 / (1.0 - self.p))
        mask = keep.astype(x.dtype) * scale
        self._cache = mask
        return x * mask

    def backward(self, dy, need_dx=True):
        mask = self._cached()
        if not need_dx:
            return None
        return dy if isinstance(mask, int) else dy * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels, class_count: int | None = None):
    """Mean softmax cross-entropy.

    Returns ``(loss, probs, dlogits)`` where ``dlogits`` is the gradient of
    the mean loss with respect to the logits.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} incompatible with labels {labels.shape}")
    k = logits.shape[1] if class_count is None else class_count
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ParameterError(f"labels must lie in [0, {k - 1}], got {labels.min()}..{labels.max()}")
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    probs = np.exp(logp)
    rows = np.arange(n)
    loss = float(-logp[rows, labels].astype(np.float64).mean())
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1
    dlogits /= n
    return loss, probs, dlogits
