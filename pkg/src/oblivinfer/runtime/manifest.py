"""Per-model kernel manifests.

A deployment ships only the kernels (code units) a model's layer chain can
reach; the manifest names them against the full registry and reports the
fraction of the registry left out.  The executor's touch log (every kernel id
actually entered during a forward pass) must always be a subset of the
manifest's required set; the test suite holds the two sides together.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .graph import ModelGraph
from .layers import INPLACE_KINDS, KERNEL_FOR_KIND, KERNEL_REGISTRY


@dataclass(frozen=True)
class KernelManifest:
    model: str
    required: tuple
    registered: tuple = KERNEL_REGISTRY

    @property
    def reduction(self) -> float:
        """Fraction of the registry this model does not ship."""
        return 1.0 - len(self.required) / len(self.registered)

    def covers(self, touched) -> bool:
        return set(touched) <= set(self.required)


def kernel_manifest(graph: ModelGraph) -> KernelManifest:
    req = []

    def add(k):
        if k not in req:
            req.append(k)

    for spec in graph.layers:
        add(KERNEL_FOR_KIND[spec.kind])
        if spec.kind in INPLACE_KINDS:
            add("tensor_copy")
    add("softmax")
    add("argmax")
    ordered = tuple(k for k in KERNEL_REGISTRY if k in req)
    return KernelManifest(graph.name, ordered)


def write_manifest_csv(m: KernelManifest, path: str, header_comment: str = None):
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        f.write(f"# reduction={m.reduction:.4f} ({len(m.registered) - len(m.required)}"
                f"/{len(m.registered)} kernels excluded)\n")
        w = csv.writer(f)
        w.writerow(["model", "kernel_id", "required"])
        for k in m.registered:
            w.writerow([m.model, k, int(k in m.required)])
