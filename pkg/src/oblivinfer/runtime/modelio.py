"""Model persistence: a JSON manifest plus a raw little-endian float32 blob.

The manifest carries the architecture, the parameter storage order, and the
SHA-256 of the blob; the blob is the concatenation of every parameter tensor
in that order.  Loading re-validates everything it can: JSON structure, the
shape chain, the blob length, and the checksum.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from ..errors import BlobError, ChecksumError, ParseError
from .graph import ModelGraph
from .layers import LayerSpec

FORMAT = "oblivinfer-model-v1"


def _blob_bytes(graph: ModelGraph) -> bytes:
    parts = []
    for i, role, _shape in graph.param_order():
        arr = graph.params[i][role]
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(graph: ModelGraph, manifest_path: str, force: bool = False) -> str:
    """Write manifest + weights blob; refuses to overwrite unless ``force``.

    The blob lands next to the manifest as ``<stem>.bin``.  Returns the blob
    path.
    """
    blob_path = os.path.splitext(manifest_path)[0] + ".bin"
    for p in (manifest_path, blob_path):
        if os.path.exists(p) and not force:
            raise FileExistsError(f"{p} exists; pass force=True to overwrite")
    blob = _blob_bytes(graph)
    doc = {
        "format": FORMAT,
        "name": graph.name,
        "input_shape": list(graph.input_shape),
        "layers": [spec.to_json() for spec in graph.layers],
        "param_order": [
            {"layer": i, "role": role, "shape": list(shape)}
            for i, role, shape in graph.param_order()
        ],
        "weights_file": os.path.basename(blob_path),
        "weights_sha256": hashlib.sha256(blob).hexdigest(),
    }
    os.makedirs(os.path.dirname(os.path.abspath(manifest_path)), exist_ok=True)
    with open(manifest_path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    with open(blob_path, "wb") as f:
        f.write(blob)
    return blob_path


def _parse_manifest(manifest_path: str) -> dict:
    try:
        with open(manifest_path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{manifest_path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ParseError(f"{manifest_path}: missing or wrong format tag (want {FORMAT})")
    for key in ("name", "input_shape", "layers", "param_order", "weights_sha256"):
        if key not in doc:
            raise ParseError(f"{manifest_path}: missing key {key!r}")
    return doc


def _graph_from_doc(doc: dict) -> ModelGraph:
    layers = []
    for i, ld in enumerate(doc["layers"]):
        if not isinstance(ld, dict) or "kind" not in ld:
            raise ParseError(f"layer {i}: expected an object with a 'kind'")
        h = dict(ld)
        kind = h.pop("kind")
        try:
            layers.append(LayerSpec(kind, h))
        except ValueError as e:
            raise ParseError(f"layer {i}: {e}") from e
    return ModelGraph(doc["name"], tuple(doc["input_shape"]), layers)


def load_spec(manifest_path: str) -> ModelGraph:
    """Architecture only: parameters stay zero, blob untouched."""
    return _graph_from_doc(_parse_manifest(manifest_path))


def load_model(manifest_path: str, weights_path: str = None) -> ModelGraph:
    doc = _parse_manifest(manifest_path)
    graph = _graph_from_doc(doc)
    if weights_path is None:
        weights_path = os.path.join(
            os.path.dirname(os.path.abspath(manifest_path)),
            doc.get("weights_file", os.path.splitext(os.path.basename(manifest_path))[0] + ".bin"),
        )
    with open(weights_path, "rb") as f:
        blob = f.read()
    want = graph.param_count() * 4
    if len(blob) != want:
        raise BlobError(f"{weights_path}: {len(blob)} bytes, manifest declares {want}")
    digest = hashlib.sha256(blob).hexdigest()
    if digest != doc["weights_sha256"]:
        raise ChecksumError(f"{weights_path}: sha256 {digest[:12]}.. != manifest {doc['weights_sha256'][:12]}..")
    declared = [(d["layer"], d["role"], tuple(d["shape"])) for d in doc["param_order"]]
    if declared != graph.param_order():
        raise ParseError("param_order does not match the layer chain")
    off = 0
    for i, role, shape in graph.param_order():
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape)
        graph.params[i][role] = arr.astype(np.float32)
        off += n * 4
    graph._check_params()
    return graph
