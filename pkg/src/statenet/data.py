"""Folder-per-class datasets: indexing, stratified splitting, decoding, batching.

Layout on disk is ``<root>/<class_name>/<image>``.  Binary PPM/PGM (P5/P6)
is decoded natively; other formats go through Pillow when it is installed.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_image
from .errors import DatasetError, DecodeError, ParameterError

STATE_NAMES = (
    "creamy_paste", "diced", "floured", "grated", "juiced", "julienne",
    "mixed", "other", "peeled", "sliced", "whole",
)
PAPER_FRACTIONS = (0.682, 0.148, 0.170)
SPLITS = ("train", "val", "test")

_NATIVE_SUFFIXES = {".ppm", ".pgm", ".pnm"}
_PIL_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}

# stream tags folded into seed sequences so independent uses never collide
_SHUFFLE_STREAM = 0x5EED
_AUGMENT_STREAM = 0xA11F
_SPLIT_STREAM = 0x5B17


class DatasetWarning(UserWarning):
    pass


# --------------------------------------------------------------------- images

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        if buf[pos:pos + 1].isspace():
            pos += 1
        elif buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ValueError("unexpected end of header")
    return buf[start:pos], pos


def decode_pnm(buf: bytes) -> np.ndarray:
    """Decode binary PGM (P5) or PPM (P6) bytes to an ``h x w x c`` uint8 array."""
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"not a binary PGM/PPM (magic {magic!r})")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        fields.append(int(tok))
    w, h, maxval = fields
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ValueError(f"bad PNM header w={w} h={h} maxval={maxval}")
    pos += 1  # single whitespace byte ends the header
    depth = 1 if maxval < 256 else 2
    need = w * h * channels * depth
    data = buf[pos:pos + need]
    if len(data) < need:
        raise ValueError(f"truncated pixel data ({len(data)} of {need} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8 if depth == 1 else ">u2").reshape(h, w, channels)
    if maxval != 255:
        arr = np.rint(arr.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return arr


def encode_pnm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    if c not in (1, 3):
        raise ParameterError(f"PNM needs 1 or 3 channels, got {c}")
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    magic = "P5" if c == 1 else "P6"
    return f"{magic}\n{w} {h}\n255\n".encode() + data.tobytes()


def write_image(path, img: np.ndarray):
    """Write PPM/PGM natively; other suffixes via Pillow."""
    path = Path(path)
    if path.suffix.lower() in _NATIVE_SUFFIXES:
        path.write_bytes(encode_pnm(img))
        return
    from PIL import Image

    data = np.clip(np.rint(np.asarray(img)), 0, 255).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(data).save(path)


def decode_image(path) -> np.ndarray:
    """Decode any supported file to ``h x w x 3`` uint8."""
    path = Path(path)
    try:
        if path.suffix.lower() in _NATIVE_SUFFIXES:
            arr = decode_pnm(path.read_bytes())
        else:
            try:
                from PIL import Image
            except ImportError:  # pragma: no cover - Pillow ships in most envs
                raise ValueError("Pillow is required for non-PNM images") from None
            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
            if arr.ndim == 2:
                arr = arr[:, :, None]
    except (OSError, ValueError, SyntaxError) as e:
        raise DecodeError(f"cannot decode {path}: {e}") from None
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    elif arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return np.ascontiguousarray(arr)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize; source coordinates clamp to the border."""
    h, w = img.shape[:2]
    src = img.astype(np.float64)

    def axis(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis(out_h, h)
    c0, c1, fc = axis(out_w, w)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    top = src[r0][:, c0] * (1 - fc) + src[r0][:, c1] * fc
    bot = src[r1][:, c0] * (1 - fc) + src[r1][:, c1] * fc
    return (top * (1 - fr) + bot * fr).astype(np.float32)


def load_image(path, size=(150, 150)) -> np.ndarray:
    """Decode and resize to ``size`` (h, w); returns float32 ``h x w x 3`` in [0, 255]."""
    arr = decode_image(path)
    if arr.shape[:2] == tuple(size):
        return arr.astype(np.float32)
    return resize_bilinear(arr, size[0], size[1])


def _sniff(path: Path) -> bool:
    suffix = path.suffix.lower()
    try:
        if suffix in _NATIVE_SUFFIXES:
            with open(path, "rb") as f:
                head = f.read(64)
            if head[:2] not in (b"P5", b"P6"):
                return False
            return True
        if suffix in _PIL_SUFFIXES:
            from PIL import Image

            with Image.open(path) as im:
                im.verify()
            return True
    except Exception:
        return False
    return False


# -------------------------------------------------------------------- indexing

@dataclass
class DatasetIndex:
    classes: list[str]
    samples: list[tuple[str, int]]
    splits: list[str] | None = None

    def __post_init__(self):
        k = len(self.classes)
        for path, label in self.samples:
            if not 0 <= label < k:
                raise DatasetError(f"label {label} of {path} outside [0, {k - 1}]")
        if self.splits is not None and len(self.splits) != len(self.samples):
            raise DatasetError("split tags and samples differ in length")

    def __len__(self):
        return len(self.samples)

    def subset(self, tag: str) -> list[tuple[str, int]]:
        if self.splits is None:
            raise DatasetError("index has not been split")
        return [s for s, t in zip(self.samples, self.splits) if t == tag]

    def counts(self) -> dict[str, int]:
        return {t: (self.splits or []).count(t) for t in SPLITS}

    def to_json(self) -> str:
        records = [
            {"path": p, "class": self.classes[c], "split": t}
            for (p, c), t in zip(self.samples, self.splits or [None] * len(self.samples))
        ]
        return json.dumps(records, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str, classes=None) -> "DatasetIndex":
        try:
            records = json.loads(text)
            classes = sorted({r["class"] for r in records}) if classes is None else list(classes)
            lookup = {c: i for i, c in enumerate(classes)}
            samples = [(r["path"], lookup[r["class"]]) for r in records]
            splits = [r["split"] for r in records]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DatasetError(f"malformed split file: {e}") from None
        if any(s is None for s in splits):
            splits = None
        return cls(classes, samples, splits)

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetIndex":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise DatasetError(f"cannot read split file {path}: {e}") from None
        return cls.from_json(text)


def scan(root) -> DatasetIndex:
    """Index ``root/<class>/<image>``; classes and files in lexicographic order."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    classes = sorted(d.name for d in root.iterdir() if d.is_dir() and not d.name.startswith("."))
    if not classes:
        raise DatasetError(f"{root} contains no class directories")
    samples = []
    for label, name in enumerate(classes):
        found = 0
        for f in sorted(p for p in (root / name).iterdir() if p.is_file()):
            if _sniff(f):
                samples.append((str(f), label))
                found += 1
            else:
                warnings.warn(f"skipping non-image file {f}", DatasetWarning, stacklevel=2)
        if not found:
            warnings.warn(f"class directory {root / name} has no images", DatasetWarning, stacklevel=2)
    return DatasetIndex(classes, samples)


def split(index: DatasetIndex, fractions=PAPER_FRACTIONS, seed: int = 0) -> DatasetIndex:
    """Stratified train/val/test assignment.

    Each class's samples are shuffled with a class-specific substream of
    ``seed`` and cut at the cumulative fractions: floor for train and val,
    the remainder goes to test.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 or not math.isfinite(f) for f in fractions):
        raise ParameterError(f"need three non-negative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-6:
        raise ParameterError(f"fractions must sum to 1, got {sum(fractions)}")
    tags = [None] * len(index.samples)
    by_class: dict[int, list[int]] = {}
    for i, (_, label) in enumerate(index.samples):
        by_class.setdefault(label, []).append(i)
    for label, members in sorted(by_class.items()):
        rng = np.random.default_rng([seed, label, _SPLIT_STREAM])
        order = [members[j] for j in rng.permutation(len(members))]
        n = len(order)
        n_train = math.floor(fractions[0] * n + 1e-9)
        n_val = min(math.floor(fractions[1] * n + 1e-9), n - n_train)
        for k, i in enumerate(order):
            tags[i] = "train" if k < n_train else "val" if k < n_train + n_val else "test"
    return DatasetIndex(list(index.classes), list(index.samples), tags)


# -------------------------------------------------------------------- batching

class ArraySource:
    """In-memory images (``n x h x w x c``, values in [0, 255]) with labels."""

    def __init__(self, images, labels):
        self.images = images
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DatasetError("images and labels differ in length")

    def __len__(self):
        return len(self.labels)

    def image(self, i: int) -> np.ndarray:
        return self.images[i]


class PathSource:
    """Images decoded from disk on demand and resized to ``size``."""

    def __init__(self, samples, size=(150, 150), cache: bool = True):
        self.paths = [p for p, _ in samples]
        self.labels = np.array([l for _, l in samples], dtype=np.int64)
        self.size = tuple(size)
        self._cache: dict[int, np.ndarray] | None = {} if cache else None

    def __len__(self):
        return len(self.paths)

    def image(self, i: int) -> np.ndarray:
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        img = load_image(self.paths[i], self.size)
        if self._cache is not None:
            self._cache[i] = img
        return img


@dataclass
class Batch:
    x: np.ndarray
    y: np.ndarray
    indices: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.y)


def epoch_order(n: int, seed: int, epoch: int, shuffle: bool) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch, _SHUFFLE_STREAM]).permutation(n)


def batches(source, batch_size: int, cfg: AugmentConfig | None = None, seed: int = 0,
            epoch: int = 0, training: bool = False, shuffle: bool | None = None,
            workers: int = 1):
    """Yield :class:`Batch` objects for one pass over ``source``.

    The visiting order is a permutation seeded by ``(seed, epoch)``; each
    image's augmentation draws from its own ``(seed, epoch, index)`` stream,
    so results do not depend on ``workers``.  The last short batch is kept.
    """
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    n = len(source)
    if n == 0:
        raise DatasetError("cannot iterate an empty split")
    cfg = cfg if cfg is not None else AugmentConfig()
    shuffle = training if shuffle is None else shuffle
    order = epoch_order(n, seed, epoch, shuffle)

    def prepare(i):
        rng = np.random.default_rng([seed, epoch, int(i), _AUGMENT_STREAM]) if training else None
        return augment_image(source.image(int(i)), cfg, rng, training)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            imgs = list(pool.map(prepare, idx)) if pool else [prepare(i) for i in idx]
            yield Batch(np.stack(imgs), source.labels[idx], idx)
    finally:
        if pool:
            pool.shutdown()


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
