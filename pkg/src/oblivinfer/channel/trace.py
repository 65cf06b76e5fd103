"""Access traces: recording, attacker-granularity coarsening, comparison, io.

An :class:`AccessTrace` is the ground-truth event stream of one traced
forward pass: (site, kind, addr, size) per event, where site indexes the
layout's code block that performed the access.  A :class:`ChannelTrace` is
what an attacker at a given granularity observes of it:

- ``full``:  every event as (site, kind, addr);
- ``line``:  the cache-line index (addr >> 6) of every event;
- ``page``:  the page index (addr >> 12) of every event;
- ``fault``: page indices with consecutive repeats collapsed, the view of an
  observer who keeps one page resident and sees a fault only when the page
  changes.

Obliviousness in this model is operational: two executions are
indistinguishable at a granularity iff their ChannelTraces compare equal.
``trace_equal`` decides exactly that and reports the first divergence;
``trace_diff`` attributes divergences to code sites (full granularity only,
by design: coarse observations no longer carry a site).

Traces serialize to a small binary format (magic ``OTRC``) carrying the
granularity, mode, layout fingerprint, and packed observation records, plus
a CSV export for eyeball inspection.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..errors import GranularityError, TraceError

EXEC, READ, WRITE = 0, 1, 2
KIND_NAMES = {EXEC: "exec", READ: "read", WRITE: "write"}

LINE_SHIFT = 6
PAGE_SHIFT = 12


class Granularity(Enum):
    FULL = "full"
    LINE = "line"
    PAGE = "page"
    FAULT = "fault"

    @classmethod
    def parse(cls, s: str) -> "Granularity":
        try:
            return cls(s.lower())
        except ValueError:
            raise GranularityError(f"unknown granularity {s!r}") from None


@dataclass(frozen=True)
class AccessEvent:
    seq: int
    site: int
    kind: int
    addr: int
    size: int

    def __str__(self):
        return f"#{self.seq} s{self.site} {KIND_NAMES[self.kind]} 0x{self.addr:x}+{self.size}"


class AccessTrace:
    """Columnar event stream with trace identity metadata."""

    def __init__(self, model: str, mode: str, fingerprint: bytes, site, kind, addr, size):
        self.model = model
        self.mode = mode
        self.fingerprint = bytes(fingerprint)
        self.site = np.ascontiguousarray(site, dtype=np.uint32)
        self.kind = np.ascontiguousarray(kind, dtype=np.uint8)
        self.addr = np.ascontiguousarray(addr, dtype=np.uint64)
        self.size = np.ascontiguousarray(size, dtype=np.uint32)
        n = len(self.site)
        if not (len(self.kind) == len(self.addr) == len(self.size) == n):
            raise TraceError("event columns have mismatched lengths")

    def __len__(self):
        return len(self.site)

    def event(self, i: int) -> AccessEvent:
        return AccessEvent(i, int(self.site[i]), int(self.kind[i]), int(self.addr[i]), int(self.size[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self.event(i)

    def __eq__(self, other):
        if not isinstance(other, AccessTrace):
            return NotImplemented
        return (
            self.fingerprint == other.fingerprint
            and len(self) == len(other)
            and np.array_equal(self.site, other.site)
            and np.array_equal(self.kind, other.kind)
            and np.array_equal(self.addr, other.addr)
            and np.array_equal(self.size, other.size)
        )


class Recorder:
    """Collects events during one traced forward pass."""

    def __init__(self, layout):
        self.layout = layout
        self.mode: Optional[str] = None
        self._sites = []
        self._kinds = []
        self._addrs = []
        self._sizes = []

    def emit(self, site: int, kind: int, addr: int, size: int):
        self.emit_block(
            np.array([site], np.uint32),
            np.array([kind], np.uint8),
            np.array([addr], np.uint64),
            np.array([size], np.uint32),
        )

    def emit_block(self, sites, kinds, addrs, sizes):
        """Append a pre-built chunk of events (columnar, equal lengths)."""
        self._sites.append(np.ascontiguousarray(sites, np.uint32))
        self._kinds.append(np.ascontiguousarray(kinds, np.uint8))
        self._addrs.append(np.ascontiguousarray(addrs, np.uint64))
        self._sizes.append(np.ascontiguousarray(sizes, np.uint32))

    def trace(self, model: str) -> AccessTrace:
        if self.mode is None:
            raise TraceError("recorder was never attached to a forward pass")
        cat = lambda chunks, dt: (
            np.concatenate(chunks) if chunks else np.empty(0, dt)
        )
        return AccessTrace(
            model,
            self.mode,
            self.layout.fingerprint,
            cat(self._sites, np.uint32),
            cat(self._kinds, np.uint8),
            cat(self._addrs, np.uint64),
            cat(self._sizes, np.uint32),
        )


class ChannelTrace:
    """What an attacker at one granularity observes of an AccessTrace.

    ``full`` keeps columns (site, kind, addr); coarse granularities keep a
    single observation column ``obs``.
    """

    def __init__(self, model, mode, granularity: Granularity, fingerprint: bytes, columns: dict):
        self.model = model
        self.mode = mode
        self.granularity = granularity
        self.fingerprint = bytes(fingerprint)
        self.columns = columns

    def __len__(self):
        for v in self.columns.values():
            return len(v)
        return 0

    @property
    def obs(self) -> np.ndarray:
        """The observation ids (coarse granularities only)."""
        if self.granularity is Granularity.FULL:
            raise GranularityError("full traces have (site, kind, addr) columns, not obs")
        return self.columns["obs"]

    def __eq__(self, other):
        if not isinstance(other, ChannelTrace):
            return NotImplemented
        return trace_equal(self, other).equal

    def __repr__(self):
        return (
            f"ChannelTrace({self.model!r}, {self.mode}, {self.granularity.value}, "
            f"{len(self)} obs)"
        )


def coarsen(trace: AccessTrace, granularity: Granularity) -> ChannelTrace:
    """Project a ground-truth event stream onto an attacker granularity."""
    g = granularity
    if g is Granularity.FULL:
        cols = {
            "site": trace.site.copy(),
            "kind": trace.kind.copy(),
            "addr": trace.addr.copy(),
        }
    elif g is Granularity.LINE:
        cols = {"obs": trace.addr >> np.uint64(LINE_SHIFT)}
    elif g is Granularity.PAGE:
        cols = {"obs": trace.addr >> np.uint64(PAGE_SHIFT)}
    elif g is Granularity.FAULT:
        pages = trace.addr >> np.uint64(PAGE_SHIFT)
        if len(pages) == 0:
            cols = {"obs": pages}
        else:
            keep = np.empty(len(pages), bool)
            keep[0] = True
            np.not_equal(pages[1:], pages[:-1], out=keep[1:])
            cols = {"obs": pages[keep]}
    else:
        raise GranularityError(f"unknown granularity {granularity!r}")
    return ChannelTrace(trace.model, trace.mode, g, trace.fingerprint, cols)


@dataclass
class EquivalenceReport:
    equal: bool
    first_divergence: Optional[int]
    len_a: int
    len_b: int
    detail: str

    def __bool__(self):
        return self.equal


def _check_comparable(a: ChannelTrace, b: ChannelTrace):
    if a.granularity is not b.granularity:
        raise GranularityError(
            f"cannot compare {a.granularity.value} trace with {b.granularity.value} trace"
        )
    if a.fingerprint != b.fingerprint:
        raise TraceError("traces come from different memory layouts (fingerprint mismatch)")


def trace_equal(a: ChannelTrace, b: ChannelTrace) -> EquivalenceReport:
    """Exact observation-sequence equality with first-divergence reporting."""
    _check_comparable(a, b)
    n = min(len(a), len(b))
    for name in a.columns:
        ca, cb = a.columns[name][:n], b.columns[name][:n]
        neq = np.flatnonzero(ca != cb)
        if len(neq):
            i = int(neq[0])
            # report the earliest divergence across all columns
            for name2 in a.columns:
                neq2 = np.flatnonzero(a.columns[name2][:i] != b.columns[name2][:i])
                if len(neq2):
                    i = int(neq2[0])
                    name = name2
            va = a.columns[name][i]
            vb = b.columns[name][i]
            return EquivalenceReport(
                False, i, len(a), len(b),
                f"observation {i}: {name} 0x{int(va):x} != 0x{int(vb):x}",
            )
    if len(a) != len(b):
        return EquivalenceReport(
            False, n, len(a), len(b),
            f"common prefix equal; lengths differ ({len(a)} vs {len(b)})",
        )
    return EquivalenceReport(True, None, len(a), len(b), "traces identical")


@dataclass(frozen=True)
class SiteDivergence:
    site: int
    name: str
    count_a: int
    count_b: int


def trace_diff(a: ChannelTrace, b: ChannelTrace, layout=None):
    """Attribute divergences to code sites (full granularity only).

    For every site appearing in either trace, the per-site subsequence of
    (kind, addr) observations is compared; sites whose subsequences differ
    are reported.  This sidesteps whole-trace alignment: site attribution is
    carried by the events themselves.
    """
    _check_comparable(a, b)
    if a.granularity is not Granularity.FULL:
        raise GranularityError("trace_diff requires full-granularity traces")
    out = []
    sites = np.union1d(np.unique(a.columns["site"]), np.unique(b.columns["site"]))
    for s in sites:
        ma = a.columns["site"] == s
        mb = b.columns["site"] == s
        sub_a = np.stack([a.columns["kind"][ma], a.columns["addr"][ma].astype(np.uint64)]) if ma.any() else np.empty((2, 0))
        sub_b = np.stack([b.columns["kind"][mb], b.columns["addr"][mb].astype(np.uint64)]) if mb.any() else np.empty((2, 0))
        if sub_a.shape != sub_b.shape or not np.array_equal(sub_a, sub_b):
            name = layout.site_name(int(s)) if layout is not None else f"site{int(s)}"
            out.append(SiteDivergence(int(s), name, int(ma.sum()), int(mb.sum())))
    return out


# ---------------------------------------------------------------------------
# file format: magic, version u32, granularity u8, fingerprint (32 bytes),
# count u64, then `count` packed records <IBQI (site, kind, addr, size).
# Coarse granularities store observation records (site 0, kind 0xFF,
# addr = observation id, size 0).  Mode and model name travel out of band
# (the trace index CSV written next to batch traces).

_MAGIC = b"OTRC"
_VERSION = 1
_GRAN_CODE = {Granularity.FULL: 0, Granularity.LINE: 1, Granularity.PAGE: 2, Granularity.FAULT: 3}
_GRAN_FROM = {v: k for k, v in _GRAN_CODE.items()}
_OBS_KIND = 0xFF
_REC_DTYPE = np.dtype([("site", "<u4"), ("kind", "u1"), ("addr", "<u8"), ("size", "<u4")])


def write_trace(ct: ChannelTrace, path: str):
    rec = np.zeros(len(ct), dtype=_REC_DTYPE)
    if ct.granularity is Granularity.FULL:
        rec["site"] = ct.columns["site"]
        rec["kind"] = ct.columns["kind"]
        rec["addr"] = ct.columns["addr"]
        rec["size"] = ct.columns.get("size", np.zeros(len(ct), np.uint32))
    else:
        rec["kind"] = _OBS_KIND
        rec["addr"] = ct.columns["obs"]
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<B", _GRAN_CODE[ct.granularity]))
        f.write(ct.fingerprint)
        f.write(struct.pack("<Q", len(ct)))
        f.write(rec.tobytes())


def read_trace(path: str) -> ChannelTrace:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[:4] != _MAGIC:
        raise TraceError(f"{path}: not a trace file (bad magic)")
    if len(data) < 49:
        raise TraceError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise TraceError(f"{path}: unsupported version {version}")
    gcode = data[8]
    if gcode not in _GRAN_FROM:
        raise TraceError(f"{path}: bad granularity code {gcode}")
    fingerprint = data[9:41]
    (count,) = struct.unpack_from("<Q", data, 41)
    want = count * _REC_DTYPE.itemsize
    if len(data) - 49 != want:
        raise TraceError(f"{path}: {len(data) - 49} record bytes, header declares {want}")
    rec = np.frombuffer(data, dtype=_REC_DTYPE, count=count, offset=49)
    g = _GRAN_FROM[gcode]
    if g is Granularity.FULL:
        cols = {
            "site": rec["site"].astype(np.uint32),
            "kind": rec["kind"].astype(np.uint8),
            "addr": rec["addr"].astype(np.uint64),
        }
    else:
        cols = {"obs": rec["addr"].astype(np.uint64)}
    return ChannelTrace("", "", g, fingerprint, cols)


def export_csv(ct: ChannelTrace, path: str, header_comment: str = None):
    with open(path, "w") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        if ct.granularity is Granularity.FULL:
            f.write("seq,site,kind,addr\n")
            for i in range(len(ct)):
                f.write(
                    f"{i},{int(ct.columns['site'][i])},"
                    f"{KIND_NAMES[int(ct.columns['kind'][i])]},"
                    f"0x{int(ct.columns['addr'][i]):x}\n"
                )
        else:
            f.write("seq,obs\n")
            for i, o in enumerate(ct.columns["obs"]):
                f.write(f"{i},0x{int(o):x}\n")
