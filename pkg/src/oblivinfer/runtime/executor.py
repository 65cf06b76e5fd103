"""Graph execution: the two modes, tracing hooks, and the classifier tail.

``forward`` walks the layer chain, appends a softmax stage when the graph
does not end in one, and always finishes with an argmax over the class
probabilities (branchy in Leaky mode, selection-based in Oblivious mode).
Outputs are bit-identical across modes; only the emitted event stream
differs.

A single input (the graph's declared shape) may be traced; a leading batch
axis is accepted for untraced bulk execution and loops the single-input
path row by row.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from ..channel.trace import AccessTrace, ChannelTrace, Granularity, Recorder, coarsen
from ..errors import ShapeError, TraceError
from ..tensor import Tensor
from .graph import ModelGraph
from .kernels import ExecContext, run_layer, run_tail_argmax, run_tail_softmax

if TYPE_CHECKING:
    from ..channel.layout import MemoryLayout


class ExecMode(Enum):
    LEAKY = "leaky"
    OBLIVIOUS = "oblivious"

    @classmethod
    def parse(cls, s: str) -> "ExecMode":
        try:
            return cls(s.lower())
        except ValueError:
            raise ValueError(f"unknown execution mode {s!r}") from None


@dataclass
class ForwardResult:
    probs: np.ndarray
    label: Union[int, np.ndarray]


def _as_input(graph, x):
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    if arr.shape == graph.input_shape:
        return arr, False
    if arr.ndim == len(graph.input_shape) + 1 and arr.shape[1:] == graph.input_shape:
        return arr, True
    raise ShapeError(
        f"input shape {arr.shape} matches neither {graph.input_shape} nor a batch of it"
    )


def forward(
    graph: ModelGraph,
    x,
    mode: ExecMode = ExecMode.LEAKY,
    layout: Optional[MemoryLayout] = None,
    recorder: Optional[Recorder] = None,
    touched: Optional[list] = None,
    capture: Optional[dict] = None,
) -> ForwardResult:
    if isinstance(mode, str):
        mode = ExecMode.parse(mode)
    arr, batched = _as_input(graph, x)
    if recorder is not None:
        if batched:
            raise TraceError("tracing requires a single input (no batch axis)")
        if layout is None:
            layout = recorder.layout
        if layout is not recorder.layout:
            raise TraceError("recorder is bound to a different layout")
        recorder.mode = mode.value
    if batched:
        probs = np.empty((arr.shape[0], graph.n_classes), np.float32)
        labels = np.empty(arr.shape[0], np.int64)
        for r in range(arr.shape[0]):
            res = forward(graph, arr[r], mode, layout=layout, touched=touched)
            probs[r] = res.probs
            labels[r] = res.label
        return ForwardResult(probs, labels)

    ctx = ExecContext(
        leaky=(mode is ExecMode.LEAKY),
        layout=layout,
        rec=recorder,
        touched=touched,
        capture=capture,
    )
    cur = arr
    buf = "input"
    for i, (spec, params) in enumerate(zip(graph.layers, graph.params)):
        out_buf = f"act{i}"
        cur = run_layer(ctx, i, spec, params, cur, buf, out_buf)
        if cur.shape != graph.out_shapes[i]:
            raise ShapeError(
                f"layer {i} ({spec.kind}) produced {cur.shape}, expected {graph.out_shapes[i]}"
            )
        buf = out_buf

    if graph.layers[-1].kind != "softmax":
        probs = run_tail_softmax(ctx, cur, buf, "probs")
        probs_buf = "probs"
    else:
        probs = np.ascontiguousarray(cur).reshape(-1)
        probs_buf = buf
    label = run_tail_argmax(ctx, probs, probs_buf)
    return ForwardResult(probs, int(label))


def traced_forward(
    graph: ModelGraph,
    x,
    mode: ExecMode,
    layout: Optional[MemoryLayout] = None,
    granularity: Optional[Granularity] = None,
):
    """Run one traced forward pass.

    Returns (result, trace): an AccessTrace when granularity is None, else
    the ChannelTrace at that granularity.
    """
    if layout is None:
        from ..channel.layout import layout_assign

        layout = layout_assign(graph)
    rec = Recorder(layout)
    res = forward(graph, x, mode, layout=layout, recorder=rec)
    trace: AccessTrace = rec.trace(graph.name)
    if granularity is None:
        return res, trace
    return res, coarsen(trace, granularity)
