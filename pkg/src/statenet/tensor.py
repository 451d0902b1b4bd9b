"""Numeric kernels shared by all layers.

Tensors are plain ``numpy.ndarray`` objects, float32 for storage, laid out
NHWC for images.  Kernels are dtype-preserving so the same code runs the
float64 gradient-check path.  ``matmul`` goes through BLAS ``sgemm``/``dgemm``
and therefore accumulates in the input precision.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

DTYPE = np.float32


def as_tensor(x, dtype=DTYPE) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - k
    if span < 0:
        return 0
    return span // stride + 1


def _check_conv_geometry(shape, kh, kw, stride, pad):
    if len(shape) != 4:
        raise ShapeError(f"expected NHWC tensor, got shape {shape}")
    if stride < 1 or pad < 0 or kh < 1 or kw < 1:
        raise ShapeError(f"invalid kernel geometry kh={kh} kw={kw} stride={stride} pad={pad}")
    n, h, w, c = shape
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(w, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"kernel {kh}x{kw} (stride {stride}, pad {pad}) does not fit input {h}x{w}"
        )
    return n, h, w, c, oh, ow


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Unfold receptive fields of an NHWC tensor into matrix rows.

    Row ``r`` is output position ``(n, i, j)`` in row-major order; each row
    holds the ``kh*kw*c`` patch ordered (ky, kx, channel), channel fastest.
    Padding is zero.
    """
    n, h, w, c, oh, ow = _check_conv_geometry(x.shape, kh, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    # windows: (n, oh', ow', c, kh, kw) -> take stride, reorder to (n, oh, ow, kh, kw, c)
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    win = win[:, :oh, :ow].transpose(0, 1, 2, 4, 5, 3)
    return win.reshape(n * oh * ow, kh * kw * c)


def col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch rows back into an NHWC tensor."""
    n, h, w, c, oh, ow = _check_conv_geometry(tuple(x_shape), kh, kw, stride, pad)
    if cols.shape != (n * oh * ow, kh * kw * c):
        raise ShapeError(f"col2im: got {cols.shape}, expected {(n * oh * ow, kh * kw * c)}")
    out = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    patches = cols.reshape(n, oh, ow, kh, kw, c)
    for ky in range(kh):
        ys = slice(ky, ky + stride * (oh - 1) + 1, stride)
        for kx in range(kw):
            xs = slice(kx, kx + stride * (ow - 1) + 1, stride)
            out[:, ys, xs, :] += patches[:, :, :, ky, kx, :]
    if pad:
        out = out[:, pad:pad + h, pad:pad + w, :]
    return np.ascontiguousarray(out)


def _binary_check(op, a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{op}: shape mismatch {np.shape(a)} vs {np.shape(b)}")


def add(a, b):
    _binary_check("add", a, b)
    return a + b


def sub(a, b):
    _binary_check("sub", a, b)
    return a - b


def mul(a, b):
    _binary_check("mul", a, b)
    return a * b


def scale(a, s: float):
    a = np.asarray(a)
    return a * a.dtype.type(s) if a.dtype.kind == "f" else a * s


def max0(a):
    return np.maximum(a, 0)


def add_channel_bias(x: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """The one permitted broadcast: add a per-channel bias along the last axis."""
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"bias of shape {bias.shape} does not match channels of {x.shape}")
    return x + bias


_OPS = {"add": add, "sub": sub, "mul": mul, "scale": scale, "max0": max0}


def elementwise(op: str, a, b=None):
    """Dispatch by name: ``add``, ``sub``, ``mul``, ``scale`` (b is a scalar) or ``max0``."""
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    if op == "max0":
        return fn(a)
    return fn(a, b)
