import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statenet.errors import LayerStateError, ParameterError
from statenet.layers import Dense
from statenet.model import Sequential
from statenet.optim import OPTIMIZERS, Optimizer

from oracles import ScalarOptimizer, quadratic_trajectory


def scalar_model(theta, dtype=np.float64):
    layer = Dense(1, 1)
    layer.params = {"w": np.array([theta], dtype=dtype)}
    layer.grads = {"w": None}
    return Sequential((1,), [layer]), layer


def run_quadratic(kind, steps=50, lr=0.05, dtype=np.float64):
    model, layer = scalar_model(1.0, dtype)
    opt = Optimizer(kind, lr)
    out = [float(layer.params["w"][0])]
    for _ in range(steps):
        layer.grads["w"] = 2 * layer.params["w"]
        opt.apply_step(model)
        out.append(float(layer.params["w"][0]))
    return out


def test_sgd_hand_step():
    model, layer = scalar_model(1.0)
    layer.grads["w"] = np.array([2.0])
    Optimizer("sgd", 0.1).apply_step(model)
    assert layer.params["w"][0] == pytest.approx(0.8, abs=1e-15)


def test_adam_first_step():
    model, layer = scalar_model(0.0, np.float64)
    layer.grads["w"] = np.array([0.5])
    Optimizer("adam", 0.001).apply_step(model)
    # m_hat = 0.5, v_hat = 0.25: shift = -0.001 * 0.5 / (0.5 + 1e-8)
    assert layer.params["w"][0] == pytest.approx(-0.001 * 0.5 / (0.5 + 1e-8), rel=1e-12)
    assert layer.params["w"][0] == pytest.approx(-0.001, rel=1e-6)


@pytest.mark.parametrize("kind", ["sgd", "adagrad"])
def test_zero_gradient_leaves_params(kind):
    model, layer = scalar_model(0.7)
    opt = Optimizer(kind, 0.1)
    for _ in range(3):
        layer.grads["w"] = np.zeros(1)
        opt.apply_step(model)
    assert layer.params["w"][0] == 0.7


@pytest.mark.parametrize("kind", OPTIMIZERS)
def test_matches_scalar_oracle(kind):
    np.testing.assert_allclose(run_quadratic(kind), quadratic_trajectory(kind), atol=1e-12, rtol=0)


@pytest.mark.parametrize("kind", OPTIMIZERS)
def test_float32_tracks_oracle(kind):
    np.testing.assert_allclose(run_quadratic(kind, dtype=np.float32), quadratic_trajectory(kind), atol=1e-5)


@pytest.mark.parametrize("kind", ["sgd", "adagrad", "rmsprop"])
def test_quadratic_strictly_decreases(kind):
    f = [t * t for t in run_quadratic(kind)]
    assert all(b < a for a, b in zip(f, f[1:]))


@pytest.mark.parametrize("kind", ["adam", "adamax", "nadam"])
def test_momentum_rules_decrease_until_overshoot(kind):
    # momentum carries these past the minimum later on; the early phase is monotone
    f = [t * t for t in run_quadratic(kind)]
    assert all(b < a for a, b in zip(f[:21], f[1:21]))
    assert f[-1] < 0.01 * f[0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=30))
def test_adagrad_step_size_never_grows(grads):
    model, layer = scalar_model(0.0)
    opt = Optimizer("adagrad", 0.001)
    sizes = []
    for g in grads:
        layer.grads["w"] = np.array([g])
        opt.apply_step(model)
        sizes.append(opt.lr / (math.sqrt(opt.slots[(layer.name, "w")]["accum"][0]) + opt.eps))
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


def test_step_counter_and_slots_shape():
    model, layer = scalar_model(1.0)
    layer.params["w"] = np.ones((2, 3))
    opt = Optimizer("adam")
    for t in range(1, 4):
        layer.grads["w"] = np.ones((2, 3))
        opt.apply_step(model)
        assert opt.t == t
    assert all(s.shape == (2, 3) for s in opt.slots[(layer.name, "w")].values())


def test_missing_gradient():
    model, _ = scalar_model(1.0)
    with pytest.raises(LayerStateError):
        Optimizer("sgd").apply_step(model)


def test_frozen_parameters_untouched():
    model, layer = scalar_model(1.0)
    layer.trainable = False
    layer.grads["w"] = np.array([5.0])
    opt = Optimizer("adam", 0.5)
    opt.apply_step(model)
    assert layer.params["w"][0] == 1.0
    assert opt.slots == {}


@pytest.mark.parametrize("kind", OPTIMIZERS)
def test_reset_reproduces_fresh_first_step(kind):
    def first_step(opt):
        model, layer = scalar_model(1.0, np.float32)
        layer.grads["w"] = np.array([0.3], np.float32)
        opt.apply_step(model)
        return layer.params["w"].tobytes()

    used = Optimizer(kind, 0.01)
    for _ in range(3):
        first_step(used)
    used.reset()
    used.reset()
    assert used.t == 0 and used.slots == {}
    assert first_step(used) == first_step(Optimizer(kind, 0.01))


def test_identical_gradient_streams_identical_trajectories(rng):
    grads = rng.normal(size=(20, 4)).astype(np.float32)
    runs = []
    for _ in range(2):
        model, layer = scalar_model(1.0, np.float32)
        layer.params["w"] = np.ones(4, np.float32)
        opt = Optimizer("nadam", 0.01)
        traj = []
        for g in grads:
            layer.grads["w"] = g.copy()
            opt.apply_step(model)
            traj.append(layer.params["w"].tobytes())
        runs.append(traj)
    assert runs[0] == runs[1]


def test_unknown_kind():
    with pytest.raises(ParameterError):
        Optimizer("lbfgs")


def test_oracle_agrees_with_hand_arithmetic():
    assert ScalarOptimizer("sgd", 0.1).step(1.0, 2.0) == pytest.approx(0.8)
