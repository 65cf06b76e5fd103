"""Deterministic simulated memory layout for a model graph.

The layout is a pure function of the graph structure (never of parameter
values or inputs): two structurally identical graphs get byte-identical
layouts and fingerprints.  Code blocks live low, data buffers high:

- every traced code block gets its own 4 KiB page by default, so a
  page-granularity observer can tell any two blocks apart; with
  ``compact=True`` blocks are packed 64 bytes apart instead, sharing pages,
  which is the layout that degrades the attack;
- every data buffer (network input, one activation output per layer, the
  predicted-label cell, every parameter tensor) starts on its own page.

The fingerprint (SHA-256 over the canonical layout description) stamps every
trace so traces from different layouts can never be compared by accident.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..runtime.graph import ModelGraph
from ..runtime.layers import TAIL_ARGMAX_BLOCKS, TAIL_SOFTMAX_BLOCKS, TRACE_BLOCKS

PAGE_SIZE = 4096
LINE_SIZE = 64
CODE_BASE = 0x0040_0000
DATA_BASE = 0x1000_0000


@dataclass(frozen=True)
class CodeBlock:
    site: int
    unit: str
    role: str
    addr: int


@dataclass(frozen=True)
class BufferSeg:
    name: str
    base: int
    size: int


def _page_ceil(n: int) -> int:
    return (n + PAGE_SIZE - 1) // PAGE_SIZE * PAGE_SIZE


class MemoryLayout:
    def __init__(self, blocks, buffers, compact: bool):
        self.blocks = list(blocks)
        self.buffers = {b.name: b for b in buffers}
        self.compact = compact
        self._by_key = {(b.unit, b.role): b for b in self.blocks}
        self.fingerprint = self._digest()

    def _digest(self) -> bytes:
        h = hashlib.sha256()
        h.update(b"layout-v1;compact=%d;" % int(self.compact))
        for b in self.blocks:
            h.update(f"B:{b.site}:{b.unit}:{b.role}:{b.addr:x};".encode())
        for s in self.buffers.values():
            h.update(f"D:{s.name}:{s.base:x}:{s.size:x};".encode())
        return h.digest()

    def block(self, unit: str, role: str) -> CodeBlock:
        return self._by_key[(unit, role)]

    def buf(self, name: str) -> BufferSeg:
        return self.buffers[name]

    def site_name(self, site: int):
        b = self.blocks[site]
        return f"{b.unit}.{b.role}"

    def owner(self, addr: int):
        """Which block or buffer an address falls in (None if unmapped)."""
        for b in self.blocks:
            span = LINE_SIZE if self.compact else PAGE_SIZE
            if b.addr <= addr < b.addr + span:
                return f"code:{b.unit}.{b.role}"
        for s in self.buffers.values():
            if s.base <= addr < s.base + s.size:
                return f"data:{s.name}"
        return None

    def __repr__(self):
        return (
            f"MemoryLayout({len(self.blocks)} blocks, {len(self.buffers)} buffers, "
            f"compact={self.compact}, fp={self.fingerprint.hex()[:12]})"
        )


def layout_units(graph: ModelGraph):
    """(unit, roles) pairs in execution order, including the executor tail."""
    units = [(f"L{i}", TRACE_BLOCKS[spec.kind]) for i, spec in enumerate(graph.layers)]
    if graph.layers[-1].kind != "softmax":
        units.append(("tail_softmax", TAIL_SOFTMAX_BLOCKS))
    units.append(("tail_argmax", TAIL_ARGMAX_BLOCKS))
    return units


def layout_assign(graph: ModelGraph, compact: bool = False) -> MemoryLayout:
    blocks = []
    step = LINE_SIZE if compact else PAGE_SIZE
    site = 0
    for unit, roles in layout_units(graph):
        for role in roles:
            blocks.append(CodeBlock(site, unit, role, CODE_BASE + site * step))
            site += 1

    buffers = []
    cur = DATA_BASE

    def add(name, nbytes):
        nonlocal cur
        buffers.append(BufferSeg(name, cur, nbytes))
        cur += _page_ceil(max(nbytes, 1))

    for name, shape in graph.buffers():
        n = 1
        for d in shape:
            n *= d
        add(name, 4 * n)
    if graph.layers[-1].kind != "softmax":
        n = graph.n_classes
        add("probs", 4 * n)
    add("label", 4)
    for i, role, shape in graph.param_order():
        n = 1
        for d in shape:
            n *= d
        add(f"L{i}.{role}", 4 * n)
    return MemoryLayout(blocks, buffers, compact)
