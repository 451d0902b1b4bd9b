"""Sequential model container plus the VGG19-base / modified-head builder."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError
from .layers import Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, ReLU

# (conv layers, filters) per VGG19 block
VGG19_BLOCKS = ((2, 64), (2, 128), (4, 256), (4, 512), (4, 512))

CLASS_COUNT = 11


class Sequential:
    """An ordered stack of layers, each tagged with the block it belongs to."""

    def __init__(self, input_shape, layers=(), blocks=()):
        self.input_shape = tuple(input_shape)
        self.layers: list[Layer] = list(layers)
        self.blocks: list[str] = list(blocks) or ["head"] * len(self.layers)

    def add(self, layer: Layer, block: str) -> Layer:
        if any(l.name == layer.name for l in self.layers):
            raise ParameterError(f"duplicate layer name {layer.name!r}")
        self.layers.append(layer)
        self.blocks.append(block)
        return layer

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def layer(self, name: str) -> Layer:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    def shapes(self) -> list[tuple[str, tuple]]:
        """Per-sample output shape after each layer."""
        out, shape = [], self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            out.append((layer.name, shape))
        return out

    @property
    def output_shape(self) -> tuple:
        shapes = self.shapes()
        return shapes[-1][1] if shapes else self.input_shape

    def parameters(self, trainable_only=False):
        """Yield ``(layer, param_name)`` pairs in layer order."""
        for layer in self.layers:
            if trainable_only and not layer.trainable:
                continue
            for pname in layer.params:
                yield layer, pname

    def frozen_prefix(self) -> int:
        """Number of leading layers that are deterministic and untrainable.

        Their output depends only on the input, so it can be computed once
        and reused when the input is not re-augmented.
        """
        for i, layer in enumerate(self.layers):
            if (layer.has_params and layer.trainable) or isinstance(layer, Dropout) and layer.p > 0:
                return i
        return len(self.layers)

    def forward(self, x, training=False, rng=None, start=0, stop=None):
        for layer in self.layers[start:stop]:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def backward(self, dy):
        """Backpropagate ``dy`` from the last layer.

        Stops at the first layer holding trainable parameters; nothing before
        it can change, so its input gradient is never formed.
        """
        first = next(
            (i for i, l in enumerate(self.layers) if l.has_params and l.trainable),
            len(self.layers),
        )
        for i in range(len(self.layers) - 1, first - 1, -1):
            dy = self.layers[i].backward(dy, need_dx=i > first)
        return dy

    def input_gradient(self, dy):
        """Full backward pass down to the model input (used by gradient checks)."""
        for layer in reversed(self.layers):
            dy = layer.backward(dy, need_dx=True)
        return dy

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def clone(self) -> "Sequential":
        return copy.deepcopy(self)

    def summary(self) -> str:
        lines = []
        for (name, shape), layer, block in zip(self.shapes(), self.layers, self.blocks):
            n = sum(p.size for p in layer.params.values())
            flag = "" if layer.trainable or not n else " frozen"
            lines.append(f"{block:8s} {name:16s} {layer.kind:10s} {str(shape):18s} {n:>10d}{flag}")
        return "\n".join(lines)


@dataclass
class ModelSpec:
    input_shape: tuple = (150, 150, 3)
    base_blocks: int = 4
    frozen_blocks: tuple | None = None  # None freezes every retained base block
    class_count: int = CLASS_COUNT
    conv_dropout: float = 0.25
    dense_dropout: float = 0.5
    dense_units: int = 512
    head_filters: tuple = field(default=(32, 64, 64))

    def resolved_frozen(self) -> tuple:
        if self.frozen_blocks is None:
            return tuple(range(1, self.base_blocks + 1))
        return tuple(sorted(set(self.frozen_blocks)))


def build_vgg19_base(input_shape, base_blocks: int, rng=None) -> Sequential:
    """The first ``base_blocks`` VGG19 conv blocks (3x3 convs + ReLU, 2x2 pool)."""
    if not 1 <= base_blocks <= len(VGG19_BLOCKS):
        raise ParameterError(f"base_blocks must be in [1, 5], got {base_blocks}")
    rng = rng if rng is not None else np.random.default_rng(0)
    h, w, c = input_shape
    model = Sequential(input_shape)
    for b, (convs, filters) in enumerate(VGG19_BLOCKS[:base_blocks], start=1):
        block = f"block{b}"
        for i in range(1, convs + 1):
            model.add(Conv2D(c, filters, 3, rng=rng, name=f"{block}_conv{i}"), block)
            model.add(ReLU(f"{block}_relu{i}"), block)
            c = filters
        if h < 2 or w < 2:
            raise ShapeError(f"input {input_shape} too small for {base_blocks} VGG blocks")
        model.add(MaxPool2D(f"{block}_pool"), block)
        h, w = h // 2, w // 2
    if h < 1 or w < 1:
        raise ShapeError(f"input {input_shape} too small for {base_blocks} VGG blocks")
    return model


def assemble_modified_head(
    base: Sequential,
    class_count: int = CLASS_COUNT,
    rng=None,
    conv_dropout: float = 0.25,
    dense_dropout: float = 0.5,
    dense_units: int = 512,
    filters=(32, 64, 64),
) -> Sequential:
    """Append three (conv, conv, pool, dropout) stages, then dense/dropout/dense."""
    rng = rng if rng is not None else np.random.default_rng(0)
    h, w, c = base.output_shape
    if min(h, w) >> len(filters) < 1:
        raise ShapeError(
            f"base output {h}x{w} is too small for {len(filters)} more pooling stages "
            f"(needs at least {2 ** len(filters)})"
        )
    for s, f in enumerate(filters, start=1):
        for i in (1, 2):
            idx = 2 * (s - 1) + i
            base.add(Conv2D(c, f, 3, rng=rng, name=f"head_conv{idx}"), "head")
            base.add(ReLU(f"head_relu{idx}"), "head")
            c = f
        base.add(MaxPool2D(f"head_pool{s}"), "head")
        base.add(Dropout(conv_dropout, f"head_drop{s}"), "head")
        h, w = h // 2, w // 2
    base.add(Flatten("flatten"), "head")
    base.add(Dense(h * w * c, dense_units, rng=rng, name="fc1"), "head")
    base.add(ReLU("fc1_relu"), "head")
    base.add(Dropout(dense_dropout, "fc1_drop"), "head")
    base.add(Dense(dense_units, class_count, rng=rng, name="logits"), "head")
    return base


def freeze(model: Sequential, frozen_blocks) -> Sequential:
    """Mark layers in the given base blocks (1-based) untrainable; all else trainable."""
    present = {b for b in model.blocks if b.startswith("block")}
    wanted = set()
    for b in frozen_blocks:
        tag = f"block{int(b)}"
        if tag not in present:
            raise ParameterError(
                f"cannot freeze block {b}: model has base blocks "
                f"{sorted(int(p[5:]) for p in present)}"
            )
        wanted.add(tag)
    for layer, block in zip(model.layers, model.blocks):
        layer.trainable = block not in wanted
    return model


def build_model(spec: ModelSpec, seed: int = 0) -> Sequential:
    """Build base + head + freezing; a pure function of ``(spec, seed)``."""
    rng = np.random.default_rng(seed)
    model = build_vgg19_base(spec.input_shape, spec.base_blocks, rng)
    assemble_modified_head(
        model,
        spec.class_count,
        rng,
        conv_dropout=spec.conv_dropout,
        dense_dropout=spec.dense_dropout,
        dense_units=spec.dense_units,
        filters=spec.head_filters,
    )
    return freeze(model, spec.resolved_frozen())
