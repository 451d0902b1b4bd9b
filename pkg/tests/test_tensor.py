import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statenet.errors import ShapeError
from statenet.tensor import col2im, elementwise, im2col, matmul

from oracles import conv2d_loops, matmul_loops


def test_matmul_identity():
    a = np.array([[1, 2], [3, 4]], dtype=np.float32)
    np.testing.assert_array_equal(matmul(np.eye(2, dtype=np.float32), a), a)


def test_matmul_against_loops():
    a = [[1.0, 2.0], [3.0, 4.0]]
    b = [[5.0, 6.0], [7.0, 8.0]]
    expected = matmul_loops(a, b)
    assert expected == [[19.0, 22.0], [43.0, 50.0]]
    np.testing.assert_array_equal(matmul(np.array(a, np.float32), np.array(b, np.float32)), expected)


def test_matmul_mismatch_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_associative(rng):
    a, b, c = (rng.uniform(-1, 1, (8, 8)).astype(np.float32) for _ in range(3))
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=1e-4, atol=1e-6)


def test_im2col_single_pixel():
    x = np.full((1, 1, 1, 1), 7.0, np.float32)
    np.testing.assert_array_equal(im2col(x, 1, 1), [[7.0]])


def test_im2col_enumerated_patches():
    x = np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3, 1)
    expected = [[1, 2, 4, 5], [2, 3, 5, 6], [4, 5, 7, 8], [5, 6, 8, 9]]
    np.testing.assert_array_equal(im2col(x, 2, 2), expected)


def test_im2col_channel_fastest():
    x = np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)
    # one 2x2 patch, ordered (ky, kx, c)
    np.testing.assert_array_equal(im2col(x, 2, 2), [np.arange(8)])


def test_im2col_kernel_too_big():
    with pytest.raises(ShapeError):
        im2col(np.zeros((1, 2, 2, 1), np.float32), 3, 3, 1, 0)


def test_im2col_padding_and_stride(rng):
    x = rng.uniform(-1, 1, (2, 5, 4, 3)).astype(np.float32)
    cols = im2col(x, 3, 3, stride=2, pad=1)
    assert cols.shape == (2 * 3 * 2, 27)
    # top-left patch: first row of the 3x3 window lies in the zero padding
    np.testing.assert_array_equal(cols[0].reshape(3, 3, 3)[0], 0)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 2), h=st.integers(1, 6), w=st.integers(1, 6), c=st.integers(1, 3),
       k=st.sampled_from([1, 2, 3]), stride=st.integers(1, 2), pad=st.integers(0, 1),
       seed=st.integers(0, 2**16))
def test_col2im_is_adjoint_of_im2col(n, h, w, c, k, stride, pad, seed):
    if h + 2 * pad < k or w + 2 * pad < k:
        return
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, h, w, c))
    cols = im2col(x, k, k, stride, pad)
    y = rng.normal(size=cols.shape)
    # <im2col(x), y> == <x, col2im(y)>
    np.testing.assert_allclose((cols * y).sum(), (x * col2im(y, x.shape, k, k, stride, pad)).sum(),
                               rtol=1e-10)
    assert cols.size == n * ((h + 2 * pad - k) // stride + 1) * ((w + 2 * pad - k) // stride + 1) * k * k * c


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), c=st.integers(1, 3), co=st.integers(1, 3),
       k=st.sampled_from([1, 3]), seed=st.integers(0, 2**16))
def test_im2col_matmul_equals_loop_convolution(h, w, c, co, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (1, h, w, c))
    wt = rng.uniform(-1, 1, (k, k, c, co))
    pad = k // 2
    got = (im2col(x, k, k, 1, pad) @ wt.reshape(-1, co)).reshape(1, h, w, co)
    np.testing.assert_allclose(got, conv2d_loops(x, wt, np.zeros(co), pad), rtol=1e-5, atol=1e-12)


def test_elementwise_ops():
    x = np.array([1.5, -2.0], np.float32)
    np.testing.assert_array_equal(elementwise("add", x, np.zeros_like(x)), x)
    np.testing.assert_array_equal(elementwise("scale", np.array([2, -3], np.float32), 0.5), [1, -1.5])
    np.testing.assert_array_equal(elementwise("max0", np.array([-1, 0, 2], np.float32)), [0, 0, 2])
    np.testing.assert_array_equal(elementwise("mul", x, x), x * x)
    np.testing.assert_array_equal(elementwise("sub", x, x), [0, 0])
    assert elementwise("scale", x, 2.0).dtype == np.float32


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeError):
        elementwise("add", np.zeros(2), np.zeros(3))
