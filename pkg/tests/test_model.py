import numpy as np
import pytest

from statenet.errors import ParameterError, ShapeError
from statenet.model import (ModelSpec, Sequential, assemble_modified_head, build_model,
                            build_vgg19_base, freeze)
from statenet.optim import Optimizer
from statenet.layers import softmax_xent


def test_vgg_base_four_blocks_at_150():
    base = build_vgg19_base((150, 150, 3), 4)
    assert base.output_shape == (9, 9, 512)
    pools = [s for n, s in base.shapes() if n.endswith("_pool")]
    assert [p[:2] for p in pools] == [(75, 75), (37, 37), (18, 18), (9, 9)]
    convs = [l for l in base if l.kind == "conv2d"]
    assert len(convs) == 2 + 2 + 4 + 4


def test_vgg_base_five_blocks_at_150():
    assert build_vgg19_base((150, 150, 3), 5).output_shape == (4, 4, 512)


@pytest.mark.parametrize("blocks", [0, 6])
def test_vgg_base_block_range(blocks):
    with pytest.raises(ParameterError):
        build_vgg19_base((150, 150, 3), blocks)


def test_head_chain_on_9x9():
    model = assemble_modified_head(build_vgg19_base((150, 150, 3), 4), 11)
    shapes = dict(model.shapes())
    assert shapes["head_pool1"] == (4, 4, 32)
    assert shapes["head_pool2"] == (2, 2, 64)
    assert shapes["head_pool3"] == (1, 1, 64)
    assert shapes["flatten"] == (64,)
    assert model.layer("fc1").params["weight"].shape == (64, 512)
    assert model.layer("logits").params["weight"].shape == (512, 11)
    assert model.layer("logits").params["bias"].shape == (11,)
    kinds = [l.kind for l, b in zip(model.layers, model.blocks) if b == "head" and l.kind != "relu"]
    stage = ["conv2d", "conv2d", "maxpool2d", "dropout"]
    assert kinds == stage * 3 + ["flatten", "dense", "dropout", "dense"]
    drops = [l.p for l, b in zip(model.layers, model.blocks) if b == "head" and l.kind == "dropout"]
    assert drops == [0.25, 0.25, 0.25, 0.5]
    filters = [l.out_channels for l in model if l.kind == "conv2d" and l.name.startswith("head")]
    assert filters == [32, 32, 64, 64, 64, 64]


def test_head_rejects_4x4_base():
    with pytest.raises(ShapeError):
        assemble_modified_head(build_vgg19_base((150, 150, 3), 5), 11)


def test_freeze_defaults_and_errors():
    model = build_model(ModelSpec(input_shape=(32, 32, 3), base_blocks=1))
    for layer, block in zip(model.layers, model.blocks):
        if layer.has_params:
            assert layer.trainable == (block == "head")
    freeze(model, ())
    assert all(l.trainable for l in model)
    with pytest.raises(ParameterError):
        freeze(model, (2,))


def test_build_is_pure():
    spec = ModelSpec(input_shape=(32, 32, 3), base_blocks=1)
    a, b = build_model(spec, 5), build_model(spec, 5)
    for (la, pa), (lb, pb) in zip(a.parameters(), b.parameters()):
        assert la.params[pa].tobytes() == lb.params[pb].tobytes()
    c = build_model(spec, 6)
    assert a.layer("head_conv1").params["weight"].tobytes() != c.layer("head_conv1").params["weight"].tobytes()


def test_freezing_does_not_change_forward(rng):
    spec = ModelSpec(input_shape=(32, 32, 3), base_blocks=1)
    frozen = build_model(spec, 1)
    free = build_model(ModelSpec(input_shape=(32, 32, 3), base_blocks=1, frozen_blocks=()), 1)
    x = rng.uniform(0, 1, (2, 32, 32, 3)).astype(np.float32)
    assert frozen.forward(x).tobytes() == free.forward(x).tobytes()


def test_frozen_base_survives_steps(rng):
    model = build_model(ModelSpec(input_shape=(32, 32, 3), base_blocks=1), 0)
    before = {(l.name, p): l.params[p].copy() for l, p in model.parameters()}
    opt = Optimizer("adam", 0.01)
    x = rng.uniform(0, 1, (4, 32, 32, 3)).astype(np.float32)
    y = rng.integers(0, 11, 4)
    for step in range(10):
        _, _, d = softmax_xent(model.forward(x, training=True, rng=np.random.default_rng(step)), y)
        model.backward(d)
        opt.apply_step(model)
    for (layer, block) in zip(model.layers, model.blocks):
        for p in layer.params:
            same = layer.params[p].tobytes() == before[(layer.name, p)].tobytes()
            assert same == (block != "head"), (layer.name, p)


def test_full_size_forward_logits():
    model = build_model(ModelSpec(), 0)
    x = np.random.default_rng(0).uniform(0, 1, (1, 150, 150, 3)).astype(np.float32)
    logits = model.forward(x)
    assert logits.shape == (1, 11)
    _, probs, _ = softmax_xent(logits, [0])
    assert abs(probs.sum() - 1) < 1e-6


def test_backward_stops_at_first_trainable(rng):
    model = build_model(ModelSpec(input_shape=(16, 16, 3), base_blocks=1), 0)
    x = rng.uniform(0, 1, (2, 16, 16, 3)).astype(np.float32)
    _, _, d = softmax_xent(model.forward(x), [0, 1])
    assert model.backward(d) is None
    assert model.input_gradient(d).shape == x.shape


def test_frozen_prefix_boundary():
    model = build_model(ModelSpec(input_shape=(32, 32, 3), base_blocks=2), 0)
    k = model.frozen_prefix()
    assert model.layers[k].name == "head_conv1"
    assert build_model(ModelSpec(input_shape=(32, 32, 3), base_blocks=2, frozen_blocks=()), 0).frozen_prefix() == 0


def test_duplicate_layer_names_rejected():
    from statenet.layers import ReLU

    m = Sequential((4,))
    m.add(ReLU("a"), "head")
    with pytest.raises(ParameterError):
        m.add(ReLU("a"), "head")
