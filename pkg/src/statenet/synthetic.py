"""Generator for an 11-class synthetic shapes dataset.

Used as a desk-scale stand-in for real cooking-state photos: every class is
a distinct shape drawn at random position, size, small tilt, and colour on
a noisy background.

Run ``python -m statenet.synthetic --out DIR`` to write it as PPM files in
the folder-per-class layout expected by ``statenet split``.
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

import numpy as np

from .data import write_image

SHAPE_CLASSES = (
    "checker", "cross", "disc", "frame", "hstripes", "pair",
    "plus", "ring", "square", "triangle", "vstripes",
)


def _mask(kind: str, u: np.ndarray, v: np.ndarray, r: float) -> np.ndarray:
    rho = np.hypot(u, v)
    box = lambda s: (np.abs(u) <= s * r) & (np.abs(v) <= s * r)  # noqa: E731
    if kind == "disc":
        return rho <= r
    if kind == "ring":
        return (rho <= r) & (rho >= 0.6 * r)
    if kind == "square":
        return box(0.85)
    if kind == "frame":
        return box(0.85) & ~box(0.5)
    if kind == "triangle":
        # apex up; v grows downwards
        return (v <= 0.6 * r) & (v >= -r + 1.7 * np.abs(u))
    if kind == "plus":
        return ((np.abs(u) <= 0.25 * r) | (np.abs(v) <= 0.25 * r)) & box(1.0)
    if kind == "cross":
        a, b = (u + v) / math.sqrt(2), (u - v) / math.sqrt(2)
        return ((np.abs(a) <= 0.25 * r) | (np.abs(b) <= 0.25 * r)) & (rho <= r)
    period = 0.5 * r
    if kind == "hstripes":
        return box(0.9) & (np.mod(v, period) < period / 2)
    if kind == "vstripes":
        return box(0.9) & (np.mod(u, period) < period / 2)
    if kind == "checker":
        return box(0.9) & ((np.floor(u / period) + np.floor(v / period)) % 2 == 0)
    if kind == "pair":
        return (np.hypot(u - 0.55 * r, v) <= 0.38 * r) | (np.hypot(u + 0.55 * r, v) <= 0.38 * r)
    raise ValueError(f"unknown shape {kind!r}")


def render(kind: str, rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """One ``size x size x 3`` uint8 image of ``kind``."""
    cy, cx = rng.uniform(0.35, 0.65, size=2) * size
    r = rng.uniform(0.18, 0.3) * size
    tilt = math.radians(rng.uniform(-20, 20))
    bg = rng.uniform(0, 100, size=3)
    fg = np.clip(bg + rng.uniform(80, 155, size=3), 0, 255)
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = rows - cy, cols - cx
    u = math.cos(tilt) * dx + math.sin(tilt) * dy
    v = -math.sin(tilt) * dx + math.cos(tilt) * dy
    img = np.where(_mask(kind, u, v, r)[:, :, None], fg, bg)
    for _ in range(rng.integers(0, 2)):
        # clutter: thin random strokes
        p0, p1 = rng.uniform(0, size, size=(2, 2))
        d = p1 - p0
        t = np.clip(((rows - p0[0]) * d[0] + (cols - p0[1]) * d[1]) / max(d @ d, 1e-9), 0, 1)
        dist = np.hypot(rows - p0[0] - t * d[0], cols - p0[1] - t * d[1])
        img = np.where((dist < 0.8)[:, :, None], rng.uniform(0, 255, size=3), img)
    img = img + rng.normal(0, 12, size=(size, size, 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate(per_class: int = 100, size: int = 64, seed: int = 0):
    """Return ``(images uint8 [n, size, size, 3], labels, class_names)``.

    Samples are ordered class by class; class ``k`` is ``SHAPE_CLASSES[k]``
    (already sorted, so labels match a directory scan).
    """
    images, labels = [], []
    for label, kind in enumerate(SHAPE_CLASSES):
        rng = np.random.default_rng([seed, label])
        for _ in range(per_class):
            images.append(render(kind, rng, size))
            labels.append(label)
    return np.stack(images), np.array(labels, dtype=np.int64), list(SHAPE_CLASSES)


def write_dataset(root, per_class: int = 100, size: int = 64, seed: int = 0) -> Path:
    root = Path(root)
    images, labels, names = generate(per_class, size, seed)
    counters = dict.fromkeys(names, 0)
    for img, label in zip(images, labels):
        name = names[label]
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        write_image(d / f"{name}_{counters[name]:04d}.ppm", img)
        counters[name] += 1
    return root


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m statenet.synthetic", description=__doc__.split("\n")[0])
    ap.add_argument("--out", required=True, help="output root directory")
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    root = write_dataset(args.out, args.per_class, args.size, args.seed)
    print(f"wrote {args.per_class * len(SHAPE_CLASSES)} images to {root}")


if __name__ == "__main__":
    main()
