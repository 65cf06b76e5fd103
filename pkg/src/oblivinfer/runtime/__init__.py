"""Model graphs, execution, persistence, and kernel manifests."""

from .executor import ExecMode, ForwardResult, forward, traced_forward
from .graph import ModelGraph, lenet_graph, mlp_graph
from .layers import (
    ACTIVATION_KINDS,
    KERNEL_FOR_KIND,
    KERNEL_REGISTRY,
    LAYER_KINDS,
    LayerSpec,
)
from .manifest import KernelManifest, kernel_manifest, write_manifest_csv
from .modelio import load_model, load_spec, save_model

__all__ = [
    "ExecMode", "ForwardResult", "forward", "traced_forward",
    "ModelGraph", "lenet_graph", "mlp_graph",
    "ACTIVATION_KINDS", "KERNEL_FOR_KIND", "KERNEL_REGISTRY", "LAYER_KINDS",
    "LayerSpec",
    "KernelManifest", "kernel_manifest", "write_manifest_csv",
    "load_model", "load_spec", "save_model",
]
