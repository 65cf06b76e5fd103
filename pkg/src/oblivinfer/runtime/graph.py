"""Model graphs: an input shape, a layer chain, and the parameter store."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ShapeChainError, ShapeError
from ..tensor import check_shape
from .layers import LayerSpec


class ModelGraph:
    """A validated feed-forward chain.

    ``params[i]`` is an ordered role -> float32 ndarray dict matching
    ``layers[i].param_shapes()``.  Construction validates the whole shape
    chain; from then on ``in_shapes``/``out_shapes`` are authoritative.
    """

    def __init__(self, name: str, input_shape, layers, params: Optional[list] = None):
        if not name or not isinstance(name, str):
            raise ValueError("model name must be a non-empty string")
        self.name = name
        self.input_shape = check_shape(input_shape)
        self.layers = list(layers)
        if not self.layers:
            raise ShapeChainError("a model needs at least one layer")
        self.in_shapes = []
        self.out_shapes = []
        s = self.input_shape
        for i, spec in enumerate(self.layers):
            if not isinstance(spec, LayerSpec):
                raise TypeError(f"layer {i} is not a LayerSpec")
            self.in_shapes.append(s)
            try:
                s = spec.out_shape(s)
            except ShapeError as e:
                raise ShapeChainError(f"layer {i} ({spec.kind}): {e}") from e
            self.out_shapes.append(s)
        if params is None:
            params = [
                {role: np.zeros(shape, np.float32) for role, shape in spec.param_shapes()}
                for spec in self.layers
            ]
        self.params = params
        self._check_params()

    def _check_params(self):
        if len(self.params) != len(self.layers):
            raise ShapeChainError("params list length != layer count")
        for i, (spec, p) in enumerate(zip(self.layers, self.params)):
            want = spec.param_shapes()
            if list(p.keys()) != [r for r, _ in want]:
                raise ShapeChainError(
                    f"layer {i} ({spec.kind}): parameter roles {list(p.keys())} != "
                    f"{[r for r, _ in want]}"
                )
            for role, shape in want:
                arr = p[role]
                if arr.shape != shape or arr.dtype != np.float32:
                    raise ShapeChainError(
                        f"layer {i} ({spec.kind}) {role}: expected float32 {shape}, "
                        f"got {arr.dtype} {arr.shape}"
                    )

    @property
    def out_shape(self) -> tuple:
        return self.out_shapes[-1]

    @property
    def n_classes(self) -> int:
        return int(np.prod(self.out_shape))

    def param_count(self) -> int:
        return sum(int(a.size) for p in self.params for a in p.values())

    def param_order(self):
        """Flat (layer index, role, shape) list in blob storage order."""
        out = []
        for i, spec in enumerate(self.layers):
            for role, shape in spec.param_shapes():
                out.append((i, role, shape))
        return out

    def buffers(self):
        """Activation buffer registry: (name, shape) in execution order."""
        regs = [("input", self.input_shape)]
        for i, s in enumerate(self.out_shapes):
            regs.append((f"act{i}", s))
        return regs

    def init_params(self, rng: np.random.Generator):
        """He-style init for weights, identity stats for batchnorm, zero bias."""
        for spec, p in zip(self.layers, self.params):
            if spec.kind == "dense":
                fan_in = spec.hyper["in_units"]
                p["weight"][:] = (rng.standard_normal(p["weight"].shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
                p["bias"][:] = 0
            elif spec.kind == "conv2d":
                fan_in = spec.hyper["in_channels"] * spec.hyper["kernel"][0] * spec.hyper["kernel"][1]
                p["weight"][:] = (rng.standard_normal(p["weight"].shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
                p["bias"][:] = 0
            elif spec.kind == "batchnorm":
                p["mean"][:] = 0
                p["var"][:] = 1
                p["gamma"][:] = 1
                p["beta"][:] = 0
        return self

    def __repr__(self):
        chain = " -> ".join(s.kind for s in self.layers)
        return f"ModelGraph({self.name!r}, {self.input_shape} -> {self.out_shape}, {chain})"


def mlp_graph(name="mlp", in_units=784, hidden=(256, 128), classes=10) -> ModelGraph:
    """The default fully-connected classifier: dense/relu stack + softmax."""
    layers = []
    prev = in_units
    for h in hidden:
        layers.append(LayerSpec("dense", {"in_units": prev, "out_units": h}))
        layers.append(LayerSpec("relu"))
        prev = h
    layers.append(LayerSpec("dense", {"in_units": prev, "out_units": classes}))
    layers.append(LayerSpec("softmax"))
    return ModelGraph(name, (in_units,), layers)


def lenet_graph(name="lenet", in_channels=3, hw=32, classes=10) -> ModelGraph:
    """Conv/pool feature stack with two dense stages on top."""
    if hw != 32:
        raise ShapeError("lenet_graph expects 32x32 inputs")
    layers = [
        LayerSpec("conv2d", {"in_channels": in_channels, "out_channels": 6, "kernel": 5}),
        LayerSpec("relu"),
        LayerSpec("maxpool2d", {"window": 2}),
        LayerSpec("conv2d", {"in_channels": 6, "out_channels": 16, "kernel": 5}),
        LayerSpec("relu"),
        LayerSpec("maxpool2d", {"window": 2}),
        LayerSpec("conv2d", {"in_channels": 16, "out_channels": 120, "kernel": 5}),
        LayerSpec("relu"),
        LayerSpec("flatten"),
        LayerSpec("dense", {"in_units": 120, "out_units": 84}),
        LayerSpec("relu"),
        LayerSpec("dense", {"in_units": 84, "out_units": classes}),
        LayerSpec("softmax"),
    ]
    return ModelGraph(name, (in_channels, hw, hw), layers)
