import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from statenet.data import Batch
from statenet.errors import ParameterError, DatasetError
from statenet.trainer import evaluate
from statenet.viz import Series, confusion, ema, format_confusion, plot_svg, smooth

from helpers import linear_stub

SVG = "{http://www.w3.org/2000/svg}"
values = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40)


def series(vals, run="r", metric="accuracy"):
    return Series(run, metric, "val", list(enumerate(vals, 1)))


def test_golden():
    assert ema([1, 0, 0], 0.5) == [1, 0.5, 0.25]


def test_constant_and_identity():
    assert ema([3.0] * 5, 0.5) == [3.0] * 5
    assert ema([1, 5, 2], 0.0) == [1, 5, 2]


def test_empty_and_bad_alpha():
    with pytest.raises(ParameterError):
        ema([], 0.5)
    with pytest.raises(ParameterError):
        ema([1], 1.0)


@given(values, st.floats(0, 0.99))
def test_smooth_properties(vals, alpha):
    s = series(vals)
    out = smooth(s, alpha)
    assert out.epochs == s.epochs
    assert smooth(smooth(s, 0.0), alpha).values == out.values
    assert all(min(vals) <= v <= max(vals) for v in out.values)


def test_plot_single_series(tmp_path):
    svg = plot_svg([series([0.1, 0.5, 0.7])], tmp_path / "p.svg")
    root = ET.fromstring((tmp_path / "p.svg").read_text())
    assert root.tag == SVG + "svg"
    assert len(root.findall(f".//{SVG}polyline")) == 2
    assert svg == (tmp_path / "p.svg").read_text()


def test_plot_six_runs_legend():
    runs = [series([0.1, 0.2, 0.3], run=k) for k in ("adagrad", "adam", "adamax", "nadam", "rmsprop", "sgd")]
    root = ET.fromstring(plot_svg(runs))
    legend = root.find(f".//{SVG}g[@class='legend']")
    labels = [t.text for t in legend.findall(f"{SVG}text")]
    assert len(labels) == 6 and labels[0].startswith("adagrad")


def test_plot_errors():
    with pytest.raises(ParameterError):
        plot_svg([])
    with pytest.raises(ParameterError):
        plot_svg([series([1.0]), series([1.0], metric="loss")])


def onehot_batches(labels, bs=7):
    x = np.eye(11, dtype=np.float32)[labels]
    for s in range(0, len(labels), bs):
        yield Batch(x[s:s + bs], labels[s:s + bs], np.arange(s, min(s + bs, len(labels))))


def test_perfect_predictor_is_diagonal():
    labels = np.repeat(np.arange(11), 3)
    counts, per_class, acc = confusion(linear_stub(np.eye(11), np.zeros(11), (11,)),
                                       onehot_batches(labels), list("abcdefghijk"))
    np.testing.assert_array_equal(counts, 3 * np.eye(11))
    assert acc == 1.0 and (per_class == 1).all()


def test_constant_predictor_column_zero():
    bias = np.zeros(11)
    bias[0] = 5
    labels = np.arange(22) % 11
    counts, _, _ = confusion(linear_stub(np.zeros((11, 11)), bias, (11,)),
                             onehot_batches(labels), list("abcdefghijk"))
    assert counts[:, 0].sum() == 22 and counts[:, 1:].sum() == 0
    np.testing.assert_array_equal(counts.sum(axis=1), 2)


def test_trace_matches_evaluate_exactly():
    rng = np.random.default_rng(0)
    stub = linear_stub(rng.normal(size=(11, 11)), rng.normal(size=11), (11,))
    labels = rng.integers(0, 11, 50)
    _, _, acc = confusion(stub, onehot_batches(labels), list("abcdefghijk"))
    assert acc == evaluate(stub, onehot_batches(labels)).accuracy


def test_confusion_empty():
    with pytest.raises(DatasetError):
        confusion(linear_stub(np.eye(11), np.zeros(11), (11,)), iter([]), list("abcdefghijk"))


def test_format_confusion():
    text = format_confusion(np.eye(2, dtype=int), ["x", "y"], np.array([1.0, 1.0]))
    assert len(text.splitlines()) == 3
