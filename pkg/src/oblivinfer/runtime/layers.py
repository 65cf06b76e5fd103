"""Layer specifications: kinds, hyperparameters, shape rules, trace blocks.

A layer is data, not code: a kind string plus a normalized hyperparameter
dict.  Everything the rest of the system needs to know about a kind lives in
the tables here: how shapes chain, which parameter tensors it owns, which
kernel (code unit) implements it, and which code blocks its traced execution
touches.

Float hyperparameters are snapped to their float32 value at construction so
every comparison a kernel later performs is single-precision exact, no matter
which backend or mode runs it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ShapeError

LAYER_KINDS = (
    "dense",
    "conv2d",
    "batchnorm",
    "relu",
    "threshold",
    "hardtanh",
    "leakyrelu",
    "maxpool2d",
    "meanpool2d",
    "flatten",
    "softmax",
)

# elementwise kinds with a data-dependent branch; the attack's selectable layers
ACTIVATION_KINDS = ("relu", "threshold", "hardtanh", "leakyrelu")

# in-place kinds that need the copy prologue
INPLACE_KINDS = ("relu", "threshold", "leakyrelu")


def _f32(v) -> float:
    return float(np.float32(v))


def _pair(v, name):
    if isinstance(v, (int, np.integer)):
        v = (int(v), int(v))
    v = tuple(int(x) for x in v)
    if len(v) != 2 or any(x <= 0 for x in v):
        raise ValueError(f"{name} must be a positive int or pair, got {v}")
    return list(v)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "hyper", _normalize(self.kind, dict(self.hyper)))

    def out_shape(self, in_shape: tuple) -> tuple:
        return _out_shape(self.kind, self.hyper, tuple(in_shape))

    def param_shapes(self) -> "list[tuple[str, tuple]]":
        """(role, shape) pairs in storage order."""
        return _param_shapes(self.kind, self.hyper)

    def to_json(self) -> dict:
        return {"kind": self.kind, **self.hyper}


def _normalize(kind: str, h: "dict[str, Any]") -> dict:
    out = {}

    def take(name, default=None, required=False, conv=None):
        if name in h:
            v = h.pop(name)
        elif required:
            raise ValueError(f"{kind}: missing hyperparameter {name!r}")
        else:
            v = default
        out[name] = conv(v) if conv else v

    if kind == "dense":
        take("in_units", required=True, conv=int)
        take("out_units", required=True, conv=int)
        if out["in_units"] <= 0 or out["out_units"] <= 0:
            raise ValueError("dense: unit counts must be positive")
    elif kind == "conv2d":
        take("in_channels", required=True, conv=int)
        take("out_channels", required=True, conv=int)
        take("kernel", required=True, conv=lambda v: _pair(v, "kernel"))
        take("stride", default=1, conv=lambda v: _pair(v, "stride"))
        take("padding", default=0, conv=lambda v: [int(x) for x in (v, v)] if isinstance(v, (int, np.integer)) else [int(x) for x in v])
        if any(p < 0 for p in out["padding"]):
            raise ValueError("conv2d: padding must be non-negative")
    elif kind == "batchnorm":
        take("channels", required=True, conv=int)
        take("eps", default=1e-5, conv=_f32)
    elif kind == "threshold":
        take("threshold", required=True, conv=_f32)
        take("val", required=True, conv=_f32)
    elif kind == "hardtanh":
        take("min_val", default=-1.0, conv=_f32)
        take("max_val", default=1.0, conv=_f32)
        if not out["min_val"] < out["max_val"]:
            raise ValueError("hardtanh: min_val must be < max_val")
    elif kind == "leakyrelu":
        take("negative_slope", default=0.01, conv=_f32)
    elif kind in ("maxpool2d", "meanpool2d"):
        take("window", required=True, conv=lambda v: _pair(v, "window"))
        if "stride" in h:
            take("stride", conv=lambda v: _pair(v, "stride"))
        else:
            out["stride"] = list(out["window"])
    elif kind in ("relu", "flatten", "softmax"):
        pass
    if h:
        raise ValueError(f"{kind}: unknown hyperparameters {sorted(h)}")
    return out


def _out_shape(kind, h, s):
    if kind == "dense":
        if s != (h["in_units"],):
            raise ShapeError(f"dense expects ({h['in_units']},), got {s}")
        return (h["out_units"],)
    if kind == "conv2d":
        if len(s) != 3 or s[0] != h["in_channels"]:
            raise ShapeError(f"conv2d expects ({h['in_channels']},H,W), got {s}")
        kh, kw = h["kernel"]
        sh, sw = h["stride"]
        ph, pw = h["padding"]
        oh = (s[1] + 2 * ph - kh) // sh + 1
        ow = (s[2] + 2 * pw - kw) // sw + 1
        if s[1] + 2 * ph < kh or s[2] + 2 * pw < kw:
            raise ShapeError(f"conv2d kernel {h['kernel']} larger than padded input {s}")
        return (h["out_channels"], oh, ow)
    if kind == "batchnorm":
        if s[0] != h["channels"]:
            raise ShapeError(f"batchnorm expects leading dim {h['channels']}, got {s}")
        return s
    if kind in ("maxpool2d", "meanpool2d"):
        if len(s) != 3:
            raise ShapeError(f"{kind} expects (C,H,W), got {s}")
        kh, kw = h["window"]
        sh, sw = h["stride"]
        if s[1] < kh or s[2] < kw:
            raise ShapeError(f"{kind} window {h['window']} larger than input {s}")
        return (s[0], (s[1] - kh) // sh + 1, (s[2] - kw) // sw + 1)
    if kind == "flatten":
        return (int(np.prod(s)),)
    # relu, threshold, hardtanh, leakyrelu, softmax preserve shape
    return s


def _param_shapes(kind, h):
    if kind == "dense":
        return [("weight", (h["in_units"], h["out_units"])), ("bias", (h["out_units"],))]
    if kind == "conv2d":
        kh, kw = h["kernel"]
        w = (h["out_channels"], h["in_channels"], kh, kw)
        return [("weight", w), ("bias", (h["out_channels"],))]
    if kind == "batchnorm":
        c = (h["channels"],)
        return [("mean", c), ("var", c), ("gamma", c), ("beta", c)]
    return []


# Code blocks each kind's traced execution touches, in allocation order.
# Data-dependent kinds split into loop-head/arm/continue blocks; everything
# else is a single straight-line body.
TRACE_BLOCKS = {
    "dense": ("body",),
    "conv2d": ("body",),
    "batchnorm": ("body",),
    "meanpool2d": ("body",),
    "flatten": ("body",),
    "relu": ("copy", "cond", "then", "cont"),
    "threshold": ("copy", "cond", "then", "cont"),
    "leakyrelu": ("copy", "cond", "then", "cont"),
    "hardtanh": ("cond_lo", "arm_lo", "cond_hi", "arm_mid", "arm_hi", "cont"),
    "maxpool2d": ("cond", "then", "cont"),
    "softmax": ("scan_cond", "scan_then", "norm"),
}

# virtual executor-tail units appended after the last layer
TAIL_SOFTMAX_BLOCKS = TRACE_BLOCKS["softmax"]
TAIL_ARGMAX_BLOCKS = ("cond", "then", "cont")

# kind -> implementing kernel (code unit); relu lowers to the threshold kernel
KERNEL_FOR_KIND = {
    "dense": "dense",
    "conv2d": "conv2d",
    "batchnorm": "batchnorm",
    "relu": "threshold",
    "threshold": "threshold",
    "hardtanh": "hardtanh",
    "leakyrelu": "leakyrelu",
    "maxpool2d": "maxpool2d",
    "meanpool2d": "meanpool2d",
    "flatten": "flatten",
    "softmax": "softmax",
}

# every kernel the engine can ship
KERNEL_REGISTRY = (
    "dense",
    "conv2d",
    "batchnorm",
    "threshold",
    "hardtanh",
    "leakyrelu",
    "maxpool2d",
    "meanpool2d",
    "flatten",
    "softmax",
    "argmax",
    "tensor_copy",
)


def branch_threshold(spec: LayerSpec):
    """The comparison an activation's taken-branch corresponds to.

    Returns (threshold, strict) where the branch is taken when
    ``x < threshold`` (strict) or ``x <= threshold`` (non-strict).  For
    hardtanh the designated branch is the low arm.
    """
    if spec.kind == "relu":
        return 0.0, False
    if spec.kind == "threshold":
        return spec.hyper["threshold"], False
    if spec.kind == "leakyrelu":
        return 0.0, False
    if spec.kind == "hardtanh":
        return spec.hyper["min_val"], True
    raise ValueError(f"{spec.kind} has no branch threshold")
