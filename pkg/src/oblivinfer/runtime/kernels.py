"""Per-layer kernel execution: numerics plus channel event emission.

Each kernel computes through the selected backend and, when a recorder is
attached, emits the memory events its control flow would produce:

- input-independent kernels (dense, conv, batchnorm, meanpool, flatten, the
  softmax normalize, the in-place copy prologue) emit one Exec plus
  buffer-level Read/Write events; their sequences depend only on the graph;
- data-dependent kernels emit element-granular streams.  In Leaky mode the
  loop head Execs and reads every element, and the then/arm block Execs (and
  stores, for the assign-or-nothing family) only where the branch is taken.
  In Oblivious mode the same loop head Execs and reads every element and the
  store is unconditional from the straight-line block; no then block ever
  executes, so the stream is a pure function of the element count.

Both modes compute bit-identical values (the branchless kernels select by
bit masking); only the emitted control flow differs.  The taken masks used
for event construction replay exactly the comparisons the kernels perform
(same float32 operands, same operators), so events and numerics can never
disagree.
"""

from __future__ import annotations

import numpy as np

from .. import backends
from ..channel.trace import EXEC, READ, WRITE
from .layers import KERNEL_FOR_KIND

_EV = 4  # nominal bytes per element access / instruction fetch


class ExecContext:
    """Carries mode and optional instrumentation through one forward pass."""

    __slots__ = ("leaky", "layout", "rec", "touched", "capture")

    def __init__(self, leaky, layout=None, rec=None, touched=None, capture=None):
        self.leaky = leaky
        self.layout = layout
        self.rec = rec
        self.touched = touched
        self.capture = capture

    def touch(self, kernel_id: str):
        if self.touched is not None:
            self.touched.append(kernel_id)


def _emit_simple(ctx, unit, role, read_bufs, write_bufs):
    """One straight-line block: Exec, then buffer-granularity reads/writes."""
    blk = ctx.layout.block(unit, role)
    n = 1 + len(read_bufs) + len(write_bufs)
    sites = np.full(n, blk.site, np.uint32)
    kinds = np.empty(n, np.uint8)
    addrs = np.empty(n, np.uint64)
    sizes = np.empty(n, np.uint32)
    kinds[0] = EXEC
    addrs[0] = blk.addr
    sizes[0] = _EV
    for j, name in enumerate(read_bufs, start=1):
        seg = ctx.layout.buf(name)
        kinds[j] = READ
        addrs[j] = seg.base
        sizes[j] = seg.size
    for j, name in enumerate(write_bufs, start=1 + len(read_bufs)):
        seg = ctx.layout.buf(name)
        kinds[j] = WRITE
        addrs[j] = seg.base
        sizes[j] = seg.size
    ctx.rec.emit_block(sites, kinds, addrs, sizes)


def _emit_cond_stream(ctx, unit, elem_addrs, taken, write_elems,
                      cond_role="cond", then_role="then"):
    """The loop of a data-dependent elementwise kernel.

    Leaky: per element Exec(cond) + Read(elem), plus Exec(then)
    [+ Write(elem)] where taken.  Oblivious: per element Exec(cond) +
    Read(elem) [+ unconditional Write(elem)]; the then block never runs.
    """
    cond = ctx.layout.block(unit, cond_role)
    n = len(elem_addrs)
    if ctx.leaky:
        then = ctx.layout.block(unit, then_role)
        per = 2 + (2 if write_elems else 1) * taken.astype(np.int64)
        offs = np.empty(n, np.int64)
        if n:
            offs[0] = 0
            np.cumsum(per[:-1], out=offs[1:])
        total = int(per.sum())
        sites = np.full(total, cond.site, np.uint32)
        kinds = np.empty(total, np.uint8)
        addrs = np.empty(total, np.uint64)
        sizes = np.full(total, _EV, np.uint32)
        kinds[offs] = EXEC
        addrs[offs] = cond.addr
        kinds[offs + 1] = READ
        addrs[offs + 1] = elem_addrs
        tk = offs[taken]
        sites[tk + 2] = then.site
        kinds[tk + 2] = EXEC
        addrs[tk + 2] = then.addr
        if write_elems:
            sites[tk + 3] = then.site
            kinds[tk + 3] = WRITE
            addrs[tk + 3] = elem_addrs[taken]
    else:
        per = 3 if write_elems else 2
        total = per * n
        sites = np.full(total, cond.site, np.uint32)
        kinds = np.empty(total, np.uint8)
        addrs = np.empty(total, np.uint64)
        sizes = np.full(total, _EV, np.uint32)
        kinds[0::per] = EXEC
        addrs[0::per] = cond.addr
        kinds[1::per] = READ
        addrs[1::per] = elem_addrs
        if write_elems:
            kinds[2::per] = WRITE
            addrs[2::per] = elem_addrs
    ctx.rec.emit_block(sites, kinds, addrs, sizes)


def _emit_exec(ctx, unit, role):
    blk = ctx.layout.block(unit, role)
    ctx.rec.emit(blk.site, EXEC, blk.addr, _EV)


def _elem_addrs(ctx, buf_name, count):
    base = ctx.layout.buf(buf_name).base
    return np.uint64(base) + np.arange(count, dtype=np.uint64) * np.uint64(4)


def _scan_updates(values_2d):
    """Strict-greater running-max update flags for each row of a scan.

    Column 0 is always an update (the scan starts from a minus-infinity
    accumulator); later columns update where strictly greater than the
    running maximum so far.
    """
    n, k = values_2d.shape
    upd = np.empty((n, k), bool)
    upd[:, 0] = True
    run = values_2d[:, 0].copy()
    for j in range(1, k):
        col = values_2d[:, j]
        upd[:, j] = col > run
        run = np.where(upd[:, j], col, run)
    return upd


# ---------------------------------------------------------------------------
# layer kernels


def _dense(ctx, i, spec, params, x, in_buf, out_buf):
    w = params["weight"]
    b = params["bias"]
    y = backends.matmul(x.reshape(1, -1), w)[0] + b
    if ctx.rec is not None:
        unit = f"L{i}"
        _emit_simple(ctx, unit, "body", [in_buf, f"{unit}.weight", f"{unit}.bias"], [out_buf])
    return y


def _conv2d(ctx, i, spec, params, x, in_buf, out_buf):
    h = spec.hyper
    y = backends.conv2d(x[None], params["weight"], params["bias"],
                        tuple(h["stride"]), tuple(h["padding"]))[0]
    if ctx.rec is not None:
        unit = f"L{i}"
        _emit_simple(ctx, unit, "body", [in_buf, f"{unit}.weight", f"{unit}.bias"], [out_buf])
    return y


def _batchnorm(ctx, i, spec, params, x, in_buf, out_buf):
    eps = np.float32(spec.hyper["eps"])
    bshape = (-1,) + (1,) * (x.ndim - 1)
    mean = params["mean"].reshape(bshape)
    var = params["var"].reshape(bshape)
    gamma = params["gamma"].reshape(bshape)
    beta = params["beta"].reshape(bshape)
    y = ((x - mean) / np.sqrt(var + eps)) * gamma + beta
    if ctx.rec is not None:
        unit = f"L{i}"
        _emit_simple(ctx, unit, "body",
                     [in_buf] + [f"{unit}.{r}" for r in ("mean", "var", "gamma", "beta")],
                     [out_buf])
    return y


def _meanpool(ctx, i, spec, params, x, in_buf, out_buf):
    h = spec.hyper
    y = backends.meanpool2d(x[None], tuple(h["window"]), tuple(h["stride"]))[0]
    if ctx.rec is not None:
        _emit_simple(ctx, f"L{i}", "body", [in_buf], [out_buf])
    return y


def _flatten(ctx, i, spec, params, x, in_buf, out_buf):
    y = np.ascontiguousarray(x).reshape(-1)
    if ctx.rec is not None:
        _emit_simple(ctx, f"L{i}", "body", [in_buf], [out_buf])
    return y


def _inplace_activation(ctx, i, spec, params, x, in_buf, out_buf):
    """relu / threshold / leakyrelu: copy prologue, then conditional rewrite."""
    flat = np.ascontiguousarray(x).reshape(-1)
    kind = spec.kind
    if kind == "leakyrelu":
        slope = spec.hyper["negative_slope"]
        out = (backends.leakyrelu_leaky if ctx.leaky else backends.leakyrelu_obl)(flat, slope)
        taken_of = lambda: flat <= np.float32(0.0)
    else:
        thr, val = (0.0, 0.0) if kind == "relu" else (spec.hyper["threshold"], spec.hyper["val"])
        out = (backends.threshold_leaky if ctx.leaky else backends.threshold_obl)(flat, thr, val)
        taken_of = lambda: flat <= np.float32(thr)
    ctx.touch("tensor_copy")
    if ctx.rec is not None:
        unit = f"L{i}"
        _emit_simple(ctx, unit, "copy", [in_buf], [out_buf])
        addrs = _elem_addrs(ctx, out_buf, flat.size)
        taken = taken_of() if ctx.leaky else None
        _emit_cond_stream(ctx, unit, addrs, taken, write_elems=True)
        _emit_exec(ctx, unit, "cont")
    return out.reshape(x.shape)


def _hardtanh(ctx, i, spec, params, x, in_buf, out_buf):
    lo = spec.hyper["min_val"]
    hi = spec.hyper["max_val"]
    flat = np.ascontiguousarray(x).reshape(-1)
    out = (backends.hardtanh_leaky if ctx.leaky else backends.hardtanh_obl)(flat, lo, hi)
    if ctx.rec is not None:
        unit = f"L{i}"
        n = flat.size
        in_addrs = _elem_addrs(ctx, in_buf, n)
        out_addrs = _elem_addrs(ctx, out_buf, n)
        blk = {r: ctx.layout.block(unit, r) for r in
               ("cond_lo", "arm_lo", "cond_hi", "arm_mid", "arm_hi", "cont")}
        if ctx.leaky:
            is_lo = flat < np.float32(lo)
            is_mid = ~is_lo & (flat <= np.float32(hi))
            # low arm: 4 events; mid/high arms: 5 events
            per = np.where(is_lo, 4, 5).astype(np.int64)
            offs = np.empty(n, np.int64)
            if n:
                offs[0] = 0
                np.cumsum(per[:-1], out=offs[1:])
            total = int(per.sum())
            sites = np.empty(total, np.uint32)
            kinds = np.empty(total, np.uint8)
            addrs = np.empty(total, np.uint64)
            sizes = np.full(total, _EV, np.uint32)
            sites[offs] = blk["cond_lo"].site
            kinds[offs] = EXEC
            addrs[offs] = blk["cond_lo"].addr
            sites[offs + 1] = blk["cond_lo"].site
            kinds[offs + 1] = READ
            addrs[offs + 1] = in_addrs
            olo = offs[is_lo]
            sites[olo + 2] = blk["arm_lo"].site
            kinds[olo + 2] = EXEC
            addrs[olo + 2] = blk["arm_lo"].addr
            sites[olo + 3] = blk["arm_lo"].site
            kinds[olo + 3] = WRITE
            addrs[olo + 3] = out_addrs[is_lo]
            for mask, arm in ((is_mid, "arm_mid"), (~is_lo & ~is_mid, "arm_hi")):
                om = offs[mask]
                sites[om + 2] = blk["cond_hi"].site
                kinds[om + 2] = EXEC
                addrs[om + 2] = blk["cond_hi"].addr
                sites[om + 3] = blk[arm].site
                kinds[om + 3] = EXEC
                addrs[om + 3] = blk[arm].addr
                sites[om + 4] = blk[arm].site
                kinds[om + 4] = WRITE
                addrs[om + 4] = out_addrs[mask]
            ctx.rec.emit_block(sites, kinds, addrs, sizes)
        else:
            total = 3 * n
            sites = np.full(total, blk["cond_lo"].site, np.uint32)
            kinds = np.empty(total, np.uint8)
            addrs = np.empty(total, np.uint64)
            sizes = np.full(total, _EV, np.uint32)
            kinds[0::3] = EXEC
            addrs[0::3] = blk["cond_lo"].addr
            kinds[1::3] = READ
            addrs[1::3] = in_addrs
            kinds[2::3] = WRITE
            addrs[2::3] = out_addrs
            ctx.rec.emit_block(sites, kinds, addrs, sizes)
        _emit_exec(ctx, unit, "cont")
    return out.reshape(x.shape)


def _maxpool(ctx, i, spec, params, x, in_buf, out_buf):
    h = spec.hyper
    window = tuple(h["window"])
    stride = tuple(h["stride"])
    if ctx.leaky:
        y, _arg = backends.maxpool2d(x[None], window, stride)
        y = y[0]
    else:
        y = backends.maxpool2d_obl(x[None], window, stride)[0]
    if ctx.rec is not None:
        unit = f"L{i}"
        C, H, W = x.shape
        kh, kw = window
        sh, sw = stride
        _, oh, ow = y.shape
        # flat input index of every window element, windows in output order
        cyx = np.arange(C)[:, None, None, None, None] * (H * W)
        oy = np.arange(oh)[None, :, None, None, None] * sh
        ox = np.arange(ow)[None, None, :, None, None] * sw
        u = np.arange(kh)[None, None, None, :, None]
        v = np.arange(kw)[None, None, None, None, :]
        idx = (cyx + (oy + u) * W + (ox + v)).reshape(C * oh * ow, kh * kw)
        nwin, k = idx.shape
        in_base = ctx.layout.buf(in_buf).base
        elem_addrs = np.uint64(in_base) + idx.astype(np.uint64) * np.uint64(4)
        out_addrs = _elem_addrs(ctx, out_buf, nwin)
        cond = ctx.layout.block(unit, "cond")
        cont = ctx.layout.block(unit, "cont")
        if ctx.leaky:
            then = ctx.layout.block(unit, "then")
            vals = np.ascontiguousarray(x).reshape(-1)[idx]
            upd = _scan_updates(vals)
            per = np.empty((nwin, k + 1), np.int64)
            per[:, :k] = 2 + upd
            per[:, k] = 2
            perf = per.reshape(-1)
            offs = np.empty(perf.size, np.int64)
            offs[0] = 0
            np.cumsum(perf[:-1], out=offs[1:])
            total = int(perf.sum())
            sites = np.full(total, cond.site, np.uint32)
            kinds = np.empty(total, np.uint8)
            addrs = np.empty(total, np.uint64)
            sizes = np.full(total, _EV, np.uint32)
            eo = offs.reshape(nwin, k + 1)
            elem_off = eo[:, :k].reshape(-1)
            kinds[elem_off] = EXEC
            addrs[elem_off] = cond.addr
            kinds[elem_off + 1] = READ
            addrs[elem_off + 1] = elem_addrs.reshape(-1)
            tk = eo[:, :k][upd]
            sites[tk + 2] = then.site
            kinds[tk + 2] = EXEC
            addrs[tk + 2] = then.addr
            trail = eo[:, k]
            sites[trail] = cont.site
            kinds[trail] = EXEC
            addrs[trail] = cont.addr
            sites[trail + 1] = cont.site
            kinds[trail + 1] = WRITE
            addrs[trail + 1] = out_addrs
            ctx.rec.emit_block(sites, kinds, addrs, sizes)
        else:
            # per window: k * (Exec cond, Read elem), then Exec cont + Write out
            per = 2 * k + 2
            total = per * nwin
            sites = np.full(total, cond.site, np.uint32)
            kinds = np.empty(total, np.uint8)
            addrs = np.empty(total, np.uint64)
            sizes = np.full(total, _EV, np.uint32)
            base = np.arange(nwin, dtype=np.int64) * per
            eoff = base[:, None] + 2 * np.arange(k, dtype=np.int64)[None, :]
            kinds[eoff.reshape(-1)] = EXEC
            addrs[eoff.reshape(-1)] = cond.addr
            kinds[(eoff + 1).reshape(-1)] = READ
            addrs[(eoff + 1).reshape(-1)] = elem_addrs.reshape(-1)
            trail = base + 2 * k
            sites[trail] = cont.site
            kinds[trail] = EXEC
            addrs[trail] = cont.addr
            sites[trail + 1] = cont.site
            kinds[trail + 1] = WRITE
            addrs[trail + 1] = out_addrs
            ctx.rec.emit_block(sites, kinds, addrs, sizes)
    return y


def softmax_probs(logits, leaky: bool):
    """Numerically stable softmax; the max scan is the only mode-dependent
    step and both variants return the same bits."""
    v = np.ascontiguousarray(logits).reshape(-1)
    m = (backends.max_reduce_leaky if leaky else backends.max_reduce_obl)(v)
    e = np.exp(v - m)
    return e / np.add.reduce(e)


def _emit_scan(ctx, unit, values, elem_addrs, cond_role, then_role):
    """Max-scan event stream (no element writes; accumulator in a register)."""
    if ctx.leaky:
        upd = _scan_updates(values.reshape(1, -1))[0]
        _emit_cond_stream(ctx, unit, elem_addrs, upd, write_elems=False,
                          cond_role=cond_role, then_role=then_role)
    else:
        _emit_cond_stream(ctx, unit, elem_addrs, None, write_elems=False,
                          cond_role=cond_role, then_role=then_role)


def _softmax_layer(ctx, i, spec, params, x, in_buf, out_buf):
    flat = np.ascontiguousarray(x).reshape(-1)
    probs = softmax_probs(flat, ctx.leaky)
    if ctx.rec is not None:
        unit = f"L{i}"
        _emit_scan(ctx, unit, flat, _elem_addrs(ctx, in_buf, flat.size),
                   "scan_cond", "scan_then")
        _emit_simple(ctx, unit, "norm", [in_buf], [out_buf])
    return probs.reshape(x.shape)


def run_tail_softmax(ctx, logits, in_buf, out_buf):
    ctx.touch("softmax")
    flat = np.ascontiguousarray(logits).reshape(-1)
    probs = softmax_probs(flat, ctx.leaky)
    if ctx.rec is not None:
        _emit_scan(ctx, "tail_softmax", flat, _elem_addrs(ctx, in_buf, flat.size),
                   "scan_cond", "scan_then")
        _emit_simple(ctx, "tail_softmax", "norm", [in_buf], [out_buf])
    return probs


def run_tail_argmax(ctx, probs, probs_buf):
    ctx.touch("argmax")
    flat = np.ascontiguousarray(probs).reshape(-1)
    label = (backends.argmax_leaky if ctx.leaky else backends.argmax_obl)(flat)
    if ctx.rec is not None:
        unit = "tail_argmax"
        _emit_scan(ctx, unit, flat, _elem_addrs(ctx, probs_buf, flat.size),
                   "cond", "then")
        cont = ctx.layout.block(unit, "cont")
        lbl = ctx.layout.buf("label")
        ctx.rec.emit_block(
            np.array([cont.site, cont.site], np.uint32),
            np.array([EXEC, WRITE], np.uint8),
            np.array([cont.addr, lbl.base], np.uint64),
            np.array([_EV, lbl.size], np.uint32),
        )
    return label


_DISPATCH = {
    "dense": _dense,
    "conv2d": _conv2d,
    "batchnorm": _batchnorm,
    "meanpool2d": _meanpool,
    "flatten": _flatten,
    "relu": _inplace_activation,
    "threshold": _inplace_activation,
    "leakyrelu": _inplace_activation,
    "hardtanh": _hardtanh,
    "maxpool2d": _maxpool,
    "softmax": _softmax_layer,
}


def run_layer(ctx: ExecContext, i, spec, params, x, in_buf, out_buf):
    ctx.touch(KERNEL_FOR_KIND[spec.kind])
    if ctx.capture is not None and spec.kind in ("relu", "threshold", "leakyrelu", "hardtanh"):
        ctx.capture[i] = np.ascontiguousarray(x).reshape(-1).copy()
    return _DISPATCH[spec.kind](ctx, i, spec, params, x, in_buf, out_buf)
