import numpy as np

from statenet.layers import Dense
from statenet.model import ModelSpec, Sequential, build_model

TINY = ModelSpec(input_shape=(16, 16, 3), base_blocks=1)


def tiny_model(seed=0, **kw):
    spec = ModelSpec(**{**TINY.__dict__, **kw})
    return build_model(spec, seed)


def linear_stub(weight, bias, input_shape):
    """A one-layer model computing ``x @ weight + bias`` on flat inputs."""
    layer = Dense(weight.shape[0], weight.shape[1])
    layer.params["weight"] = np.asarray(weight, np.float32)
    layer.params["bias"] = np.asarray(bias, np.float32)
    return Sequential(input_shape, [layer])


def random_images(n, size=16, seed=0, classes=11):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 256, (n, size, size, 3)).astype(np.float32)
    return x, np.arange(n) % classes
