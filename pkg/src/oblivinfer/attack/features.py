"""Branch-feature extraction from channel traces.

Every neuron of a data-dependent activation layer contributes one bit: did
the layer's taken-branch block run for that element?  In the dedicated-page
layout each code block has a distinguishable observation at every
granularity, so the extractor can segment a trace by the loop-head (cond)
observations, one segment per element in scan order, and mark the segments
containing a taken-branch observation.

The same bits are available white-box from the layer's pre-activation signs
(``sign_oracle``); at full granularity the two must agree exactly, which is
the correctness anchor for the extractor.

An Oblivious trace still parses (the loop head runs per element as in Leaky
mode), but no taken-branch observation ever appears, so extraction returns
all zeros; this is what empties the channel for a trace-trained classifier.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..channel.layout import MemoryLayout
from ..channel.trace import EXEC, ChannelTrace, Granularity, coarsen
from ..errors import ExtractionError
from ..runtime.executor import ExecMode, forward, traced_forward
from ..runtime.graph import ModelGraph
from ..runtime.layers import ACTIVATION_KINDS, branch_threshold
from ..channel.trace import LINE_SHIFT, PAGE_SHIFT


class LayerSelector(Enum):
    LAST = "last"
    LAST_TWO = "last2"
    ALL = "all"

    @classmethod
    def parse(cls, s: str) -> "LayerSelector":
        try:
            return cls(s.lower())
        except ValueError:
            raise ValueError(f"unknown layer selector {s!r}") from None


def selected_layers(graph: ModelGraph, selector: LayerSelector):
    """Indices of the activation layers the selector targets, in graph order."""
    acts = [i for i, s in enumerate(graph.layers) if s.kind in ACTIVATION_KINDS]
    if not acts:
        raise ExtractionError(f"model {graph.name!r} has no activation layers")
    if selector is LayerSelector.ALL:
        return acts
    if selector is LayerSelector.LAST:
        return acts[-1:]
    if len(acts) < 2:
        raise ExtractionError(
            f"selector last2 needs two activation layers, model has {len(acts)}"
        )
    return acts[-2:]


def _branch_blocks(spec):
    if spec.kind == "hardtanh":
        return "cond_lo", "arm_lo"
    return "cond", "then"


def _obs_masks(ct: ChannelTrace, cond_blk, then_blk):
    """Boolean marker arrays for the cond and then blocks at ct's granularity."""
    g = ct.granularity
    if g is Granularity.FULL:
        site = ct.columns["site"]
        kind = ct.columns["kind"]
        return (
            (site == cond_blk.site) & (kind == EXEC),
            (site == then_blk.site) & (kind == EXEC),
        )
    shift = LINE_SHIFT if g is Granularity.LINE else PAGE_SHIFT
    obs = ct.columns["obs"]
    return (
        obs == np.uint64(cond_blk.addr >> shift),
        obs == np.uint64(then_blk.addr >> shift),
    )


def extract_features(
    ct: ChannelTrace,
    graph: ModelGraph,
    layout: MemoryLayout,
    selector: LayerSelector = LayerSelector.LAST,
) -> np.ndarray:
    """Branch bits for the selected layers, concatenated in graph order."""
    if ct.fingerprint != layout.fingerprint:
        raise ExtractionError("trace does not match this layout (fingerprint mismatch)")
    parts = []
    for i in selected_layers(graph, selector):
        spec = graph.layers[i]
        n = int(np.prod(graph.out_shapes[i]))
        cond_role, then_role = _branch_blocks(spec)
        cond_blk = layout.block(f"L{i}", cond_role)
        then_blk = layout.block(f"L{i}", then_role)
        cond_mask, then_mask = _obs_masks(ct, cond_blk, then_blk)
        cond_pos = np.flatnonzero(cond_mask)
        if len(cond_pos) != n:
            raise ExtractionError(
                f"layer {i} ({spec.kind}): {len(cond_pos)} loop-head observations "
                f"for {n} elements; layout too coarse or trace mangled"
            )
        bits = np.zeros(n, np.uint8)
        then_pos = np.flatnonzero(then_mask)
        if len(then_pos):
            seg = np.searchsorted(cond_pos, then_pos, side="right") - 1
            if seg.min() < 0:
                raise ExtractionError(
                    f"layer {i} ({spec.kind}): taken-branch observation before "
                    f"the first loop-head observation"
                )
            bits[seg] = 1
        parts.append(bits)
    return np.concatenate(parts)


def feature_width(graph: ModelGraph, selector: LayerSelector) -> int:
    return sum(int(np.prod(graph.out_shapes[i])) for i in selected_layers(graph, selector))


def sign_oracle(
    graph: ModelGraph,
    x,
    selector: LayerSelector = LayerSelector.LAST,
) -> np.ndarray:
    """White-box branch bits from the pre-activation values themselves."""
    layers = selected_layers(graph, selector)
    capture = {}
    forward(graph, x, ExecMode.LEAKY, capture=capture)
    parts = []
    for i in layers:
        thr, strict = branch_threshold(graph.layers[i])
        pre = capture[i]
        t = np.float32(thr)
        bits = (pre < t) if strict else (pre <= t)
        parts.append(bits.astype(np.uint8))
    return np.concatenate(parts)


@dataclass
class AttackDataset:
    """Feature matrix (one row per trace) with the service's answers."""

    features: np.ndarray  # (N, n) uint8
    labels: np.ndarray  # (N,) int64, the labels the model returned
    n_classes: int

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "AttackDataset":
        return AttackDataset(self.features[idx], self.labels[idx], self.n_classes)


def build_dataset(
    graph: ModelGraph,
    layout: MemoryLayout,
    inputs,
    granularity: Granularity = Granularity.PAGE,
    selector: LayerSelector = LayerSelector.LAST,
    mode: ExecMode = ExecMode.LEAKY,
) -> AttackDataset:
    """Trace each input, extract features, and pair them with the predicted
    labels.  Rows are keyed by input position, so any collection schedule
    that fills its own row yields the identical dataset."""
    n = len(inputs)
    width = feature_width(graph, selector)
    feats = np.zeros((n, width), np.uint8)
    labels = np.zeros(n, np.int64)
    for j in range(n):
        res, trace = traced_forward(graph, inputs[j], mode, layout)
        ct = coarsen(trace, granularity)
        feats[j] = extract_features(ct, graph, layout, selector)
        labels[j] = res.label
    return AttackDataset(feats, labels, graph.n_classes)


def write_features_csv(ds: AttackDataset, path: str, header_comment: str = None):
    with open(path, "w") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        f.write(f"# n_classes={ds.n_classes}\n")
        cols = ",".join(f"bit_{j}" for j in range(ds.features.shape[1]))
        f.write(f"label,{cols}\n")
        for y, row in zip(ds.labels, ds.features):
            f.write(f"{int(y)},{','.join(str(int(b)) for b in row)}\n")


def read_features_csv(path: str) -> AttackDataset:
    n_classes = None
    rows = []
    labels = []
    with open(path) as f:
        header = None
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "n_classes=" in line:
                    n_classes = int(line.split("n_classes=")[1])
                continue
            if header is None:
                header = line
                continue
            parts = line.split(",")
            labels.append(int(parts[0]))
            rows.append([int(b) for b in parts[1:]])
    if header is None or not rows:
        raise ValueError(f"{path}: no feature rows")
    labels = np.asarray(labels, np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return AttackDataset(np.asarray(rows, np.uint8), labels, n_classes)
