"""Random affine augmentation with nearest-neighbour resampling.

Coordinates are (row, col).  ``tx`` shifts along rows (height), ``ty`` along
columns (width); ``zy`` scales rows and ``zx`` columns; ``shear`` is an angle
in radians applied as ``col += tan(shear) * row``.  The forward transform is

    M = T(center) . R(theta) . Shear . Zoom . T(shift) . T(-center)

and every output pixel reads the input at ``round(M^-1 . dest)``, clamped to
the image border (nearest fill).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class AugmentConfig:
    rotation_range: float = 40.0
    width_shift_range: float = 0.2
    height_shift_range: float = 0.2
    shear_range: float = 0.2
    zoom_range: float = 0.2
    horizontal_flip: bool = True
    fill_mode: str = "nearest"
    rescale: float = 1.0 / 255.0

    def __post_init__(self):
        for name in ("rotation_range", "width_shift_range", "height_shift_range",
                     "shear_range", "zoom_range"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.rotation_range > 180:
            raise ParameterError("rotation_range must be <= 180 degrees")
        if self.rescale <= 0:
            raise ParameterError("rescale must be positive")
        if self.fill_mode != "nearest":
            raise ParameterError(f"unsupported fill mode {self.fill_mode!r}")

    @classmethod
    def disabled(cls, rescale: float = 1.0 / 255.0) -> "AugmentConfig":
        """No geometric augmentation, only rescaling."""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, False, "nearest", rescale)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class AffineParams:
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    shear: float = 0.0
    zx: float = 1.0
    zy: float = 1.0
    flip: bool = False


def sample_params(cfg: AugmentConfig, rng: np.random.Generator, shape) -> AffineParams:
    """Draw one transform; ``shape`` is the image (h, w[, c]) the shifts scale with."""
    h, w = shape[0], shape[1]
    theta = rng.uniform(-cfg.rotation_range, cfg.rotation_range)
    tx = rng.uniform(-cfg.height_shift_range, cfg.height_shift_range) * h
    ty = rng.uniform(-cfg.width_shift_range, cfg.width_shift_range) * w
    shear = rng.uniform(-cfg.shear_range, cfg.shear_range)
    zx = rng.uniform(1 - cfg.zoom_range, 1 + cfg.zoom_range)
    zy = rng.uniform(1 - cfg.zoom_range, 1 + cfg.zoom_range)
    flip = bool(rng.random() < 0.5) if cfg.horizontal_flip else False
    return AffineParams(float(theta), float(tx), float(ty), float(shear),
                        float(zx), float(zy), flip)


def _translate(dr, dc):
    return np.array([[1.0, 0.0, dr], [0.0, 1.0, dc], [0.0, 0.0, 1.0]])


def affine_matrix(p: AffineParams, h: int, w: int) -> np.ndarray:
    """Forward (source -> destination) transform in homogeneous (row, col)."""
    if p.zx == 0 or p.zy == 0:
        raise ParameterError("zoom factors must be non-zero")
    a = math.radians(p.theta)
    cos, sin = math.cos(a), math.sin(a)
    rot = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
    shear = np.array([[1.0, 0.0, 0.0], [math.tan(p.shear), 1.0, 0.0], [0.0, 0.0, 1.0]])
    zoom = np.diag([p.zy, p.zx, 1.0])
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    return _translate(cr, cc) @ rot @ shear @ zoom @ _translate(p.tx, p.ty) @ _translate(-cr, -cc)


def apply_affine(img: np.ndarray, p: AffineParams) -> np.ndarray:
    if img.ndim != 3:
        raise ParameterError(f"expected a single h x w x c image, got shape {img.shape}")
    h, w = img.shape[:2]
    m = affine_matrix(p, h, w)
    if np.array_equal(m, np.eye(3)):
        out = img.copy()
    else:
        inv = np.linalg.inv(m)
        rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                                 np.arange(w, dtype=np.float64), indexing="ij")
        src_r = inv[0, 0] * rows + inv[0, 1] * cols + inv[0, 2]
        src_c = inv[1, 0] * rows + inv[1, 1] * cols + inv[1, 2]
        # round half up, then clamp = nearest fill
        ri = np.clip(np.floor(src_r + 0.5), 0, h - 1).astype(np.intp)
        ci = np.clip(np.floor(src_c + 0.5), 0, w - 1).astype(np.intp)
        out = img[ri, ci]
    if p.flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def rescale(img: np.ndarray, factor: float) -> np.ndarray:
    return (img.astype(np.float64) * factor).astype(np.float32)


def augment_image(img, cfg: AugmentConfig, rng, training: bool) -> np.ndarray:
    """Training: random affine then rescale.  Inference: rescale only."""
    if training:
        img = apply_affine(img, sample_params(cfg, rng, img.shape))
    return rescale(img, cfg.rescale)
