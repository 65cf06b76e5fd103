import numpy as np
import pytest

from oblivinfer import backends
from oblivinfer.runtime import LayerSpec, ModelGraph, mlp_graph


@pytest.fixture(scope="session", autouse=True)
def _warm_backend():
    # first numba compile is slow; do it once, outside any timed test
    backends.warm_up()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_mlp():
    g = mlp_graph("tiny", in_units=12, hidden=(8,), classes=3)
    return g.init_params(np.random.default_rng(1))


@pytest.fixture
def conv_model():
    layers = [
        LayerSpec("conv2d", {"in_channels": 1, "out_channels": 2, "kernel": 3}),
        LayerSpec("relu"),
        LayerSpec("maxpool2d", {"window": 2}),
        LayerSpec("flatten"),
        LayerSpec("dense", {"in_units": 2 * 3 * 3, "out_units": 4}),
        LayerSpec("softmax"),
    ]
    g = ModelGraph("convtiny", (1, 8, 8), layers)
    return g.init_params(np.random.default_rng(2))


@pytest.fixture
def mixed_model():
    """Covers every data-dependent kind plus batchnorm and meanpool."""
    layers = [
        LayerSpec("conv2d", {"in_channels": 1, "out_channels": 2, "kernel": 3}),
        LayerSpec("batchnorm", {"channels": 2}),
        LayerSpec("leakyrelu", {"negative_slope": 0.1}),
        LayerSpec("maxpool2d", {"window": 2}),
        LayerSpec("hardtanh", {"min_val": -0.5, "max_val": 0.5}),
        LayerSpec("meanpool2d", {"window": 3, "stride": 1}),
        LayerSpec("flatten"),
        LayerSpec("dense", {"in_units": 2, "out_units": 5}),
        LayerSpec("threshold", {"threshold": 0.2, "val": -1.0}),
        LayerSpec("dense", {"in_units": 5, "out_units": 3}),
        LayerSpec("softmax"),
    ]
    g = ModelGraph("mixed", (1, 8, 8), layers)
    g.init_params(np.random.default_rng(3))
    # nonzero batchnorm stats so the layer actually transforms
    g.params[1]["mean"][:] = [0.1, -0.2]
    g.params[1]["var"][:] = [1.5, 0.7]
    g.params[1]["beta"][:] = [0.05, -0.05]
    return g


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A small on-disk synthetic digit corpus shared by train/cli tests."""
    from oblivinfer.train import ensure_digit_files

    root = tmp_path_factory.mktemp("corpus")
    ensure_digit_files(str(root), n_train=800, n_test=400, seed=5)
    return str(root)
