"""Simulated memory-access channel: layout, recording, coarsening, equality."""

from .layout import (
    CODE_BASE,
    DATA_BASE,
    LINE_SIZE,
    PAGE_SIZE,
    BufferSeg,
    CodeBlock,
    MemoryLayout,
    layout_assign,
    layout_units,
)
from .trace import (
    EXEC,
    READ,
    WRITE,
    AccessEvent,
    AccessTrace,
    ChannelTrace,
    EquivalenceReport,
    Granularity,
    Recorder,
    SiteDivergence,
    coarsen,
    export_csv,
    read_trace,
    trace_diff,
    trace_equal,
    write_trace,
)

__all__ = [
    "CODE_BASE", "DATA_BASE", "LINE_SIZE", "PAGE_SIZE",
    "BufferSeg", "CodeBlock", "MemoryLayout", "layout_assign", "layout_units",
    "EXEC", "READ", "WRITE",
    "AccessEvent", "AccessTrace", "ChannelTrace", "EquivalenceReport",
    "Granularity", "Recorder", "SiteDivergence",
    "coarsen", "export_csv", "read_trace", "trace_diff", "trace_equal", "write_trace",
]
