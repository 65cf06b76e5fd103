"""Command-line interface.

Subcommands: train, trace, attack, verify, bench, manifest.  Every run is
deterministic given ``--seed``, and every output file starts with a comment
line embedding the command configuration.  Exit codes: 0 success, 2 usage
error, 1 verification or processing failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import backends
from .attack import (
    AttackDataset,
    LayerSelector,
    accuracy_by_size,
    extract_features,
)
from .channel import (
    Granularity,
    coarsen,
    layout_assign,
    read_trace,
    trace_diff,
    trace_equal,
    write_trace,
)
from .errors import (
    DatasetError,
    ExtractionError,
    ModelError,
    ShapeError,
    TraceError,
    TrainingError,
)
from .runtime import (
    ExecMode,
    forward,
    kernel_manifest,
    lenet_graph,
    load_model,
    load_spec,
    mlp_graph,
    save_model,
    traced_forward,
    write_manifest_csv,
)
from .train import (
    TrainConfig,
    data_root,
    load_cifar10,
    load_mnist,
    train_lenet,
    train_mlp,
    write_history_csv,
)

ARCH_NAMES = ("mlp", "lenet")
INJECTABLE = ("relu", "threshold", "leakyrelu", "hardtanh", "maxpool2d")


class _Usage(Exception):
    pass


def _config_line(args, **extra) -> str:
    parts = [f"cmd={args.cmd}"]
    for key in ("model", "dataset", "mode", "granularity", "selector",
                "sizes", "folds", "seed", "count", "iterations"):
        v = getattr(args, key, None)
        if v is not None:
            parts.append(f"{key}={v}")
    for k, v in extra.items():
        parts.append(f"{k}={v}")
    return " ".join(parts)


def _build_arch(name: str, seed: int):
    rng = np.random.default_rng(seed)
    if name == "mlp":
        return mlp_graph().init_params(rng)
    return lenet_graph().init_params(rng)


def _get_graph(args, weights=True):
    """--model is either a builtin architecture name or a manifest path."""
    m = args.model
    if m in ARCH_NAMES:
        return _build_arch(m, args.seed)
    if not os.path.exists(m):
        raise _Usage(f"--model: no such file or architecture: {m}")
    if weights:
        return load_model(m, weights_path=getattr(args, "weights", None))
    return load_spec(m)


def _load_eval_images(graph, root):
    """Pick the dataset family the model's input shape calls for."""
    s = graph.input_shape
    if len(s) == 3 and s[0] == 3:
        ds = load_cifar10(root, "test")
    else:
        pad32 = int(np.prod(s)) == 1024
        ds = load_mnist(root, "test", pad32=pad32)
    if int(np.prod(ds.images.shape[1:])) != int(np.prod(s)):
        raise _Usage(
            f"dataset images {ds.images.shape[1:]} do not fit model input {s}"
        )
    return ds


def cmd_train(args) -> int:
    root = args.dataset or data_root()
    if not os.path.isdir(root):
        raise _Usage(
            f"dataset root {root} does not exist "
            "(generate one with: python3 -m oblivinfer.train.synth)"
        )
    if args.model not in ARCH_NAMES:
        raise _Usage(f"--model must be one of {ARCH_NAMES} for train")
    backends.warm_up()
    if args.model == "mlp":
        tr = load_mnist(root, "train", pad32=args.pad32)
        te = load_mnist(root, "test", pad32=args.pad32)
        cfg = TrainConfig(epochs=args.epochs, learning_rate=0.1,
                          seed=args.seed, verbose=True)
        graph, history = train_mlp(tr, te, cfg)
    else:
        try:
            tr = load_cifar10(root, "train")
            te = load_cifar10(root, "test")
        except DatasetError:
            tr = load_mnist(root, "train", pad32=True)
            te = load_mnist(root, "test", pad32=True)
        cfg = TrainConfig(epochs=args.epochs, learning_rate=0.02,
                          seed=args.seed, verbose=True)
        graph, history = train_lenet(tr, te, cfg)
    out = args.out or os.path.join("models", f"{args.model}.json")
    blob = save_model(graph, out, force=True)
    log_path = os.path.splitext(out)[0] + "-train.csv"
    write_history_csv(log_path, history, comment=_config_line(args, epochs=args.epochs))
    print(f"final test accuracy: {history[-1]['test_acc']:.4f}")
    print(f"wrote {out}, {blob}, {log_path}")
    return 0


def cmd_trace(args) -> int:
    graph = _get_graph(args)
    mode = ExecMode.parse(args.mode)
    gran = Granularity.parse(args.granularity)
    layout = layout_assign(graph, compact=args.compact_layout)
    root = args.dataset or data_root()
    ds = _load_eval_images(graph, root)
    count = args.count
    if count < 1:
        raise _Usage("--count must be >= 1")
    if count > len(ds):
        raise _Usage(f"--count {count} exceeds test set size {len(ds)}")
    backends.warm_up()
    out_dir = args.out or "traces"
    os.makedirs(out_dir, exist_ok=True)
    xs = ds.images[:count].reshape((count,) + graph.input_shape)
    rows = []
    for j in range(count):
        res, trace = traced_forward(graph, xs[j], mode, layout)
        ct = coarsen(trace, gran)
        name = f"{j:04d}.otrc"
        write_trace(ct, os.path.join(out_dir, name))
        rows.append((name, res.label))
    fp = layout.fingerprint.hex()[:16]
    with open(os.path.join(out_dir, "index.csv"), "w") as f:
        f.write(f"# {_config_line(args, fingerprint=fp, model_name=graph.name)}\n")
        f.write("file,label\n")
        for name, label in rows:
            f.write(f"{name},{label}\n")
    print(f"wrote {count} traces + index.csv to {out_dir}")
    return 0


def _read_index(path):
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line == "file,label":
                continue
            name, label = line.rsplit(",", 1)
            rows.append((name, int(label)))
    return rows


def _write_curve_svg(path, rows, title):
    w, h, ml, mb, mt, mr = 640, 400, 60, 50, 30, 20
    xs = [s for s, _ in rows]
    px = lambda i: ml + (w - ml - mr) * (i / max(len(xs) - 1, 1))
    py = lambda a: mt + (h - mt - mb) * (1.0 - a)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w/2}" y="18" text-anchor="middle">{title}</text>',
        f'<line x1="{ml}" y1="{h-mb}" x2="{w-mr}" y2="{h-mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{h-mb}" stroke="black"/>',
    ]
    for g in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = py(g)
        parts.append(f'<line x1="{ml-4}" y1="{y:.1f}" x2="{w-mr}" y2="{y:.1f}" '
                     f'stroke="#ddd"/>')
        parts.append(f'<text x="{ml-8}" y="{y+4:.1f}" text-anchor="end">{g:.2f}</text>')
    pts = " ".join(f"{px(i):.1f},{py(a):.1f}" for i, (_, a) in enumerate(rows))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" '
                 f'stroke-width="2"/>')
    for i, (s, a) in enumerate(rows):
        parts.append(f'<circle cx="{px(i):.1f}" cy="{py(a):.1f}" r="4" '
                     f'fill="#1f77b4"/>')
        parts.append(f'<text x="{px(i):.1f}" y="{h-mb+18}" '
                     f'text-anchor="middle">{s}</text>')
    parts.append(f'<text x="{(ml+w-mr)/2}" y="{h-10}" text-anchor="middle">'
                 f'training traces</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


def cmd_attack(args) -> int:
    graph = _get_graph(args, weights=False)
    layout = layout_assign(graph, compact=args.compact_layout)
    selector = LayerSelector.parse(args.selector)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise _Usage("--sizes must list at least one size")
    index_path = os.path.join(args.traces, "index.csv")
    if not os.path.exists(index_path):
        raise _Usage(f"{args.traces}: no index.csv (not a trace directory?)")
    index = _read_index(index_path)
    feats = None
    labels = np.empty(len(index), np.int64)
    for j, (name, label) in enumerate(index):
        ct = read_trace(os.path.join(args.traces, name))
        row = extract_features(ct, graph, layout, selector)
        if feats is None:
            feats = np.zeros((len(index), len(row)), np.uint8)
        feats[j] = row
        labels[j] = label
    ds = AttackDataset(feats, labels, graph.n_classes)
    curve = accuracy_by_size(ds, sizes, k=args.folds)
    out = args.out or "attack_curve.csv"
    with open(out, "w") as f:
        f.write(f"# {_config_line(args)}\n")
        f.write("size,accuracy\n")
        for s, a in curve:
            f.write(f"{s},{a:.6f}\n")
    for s, a in curve:
        print(f"size {s:>6}: attack accuracy {a:.4f}")
    print(f"wrote {out}")
    if args.plot:
        svg = os.path.splitext(out)[0] + ".svg"
        _write_curve_svg(svg, curve, f"attack accuracy vs training traces "
                                     f"({args.selector})")
        print(f"wrote {svg}")
    return 0


def cmd_verify(args) -> int:
    if args.count < 2:
        raise _Usage("--count must be >= 2 for an equivalence sweep")
    graph = _get_graph(args)
    layout = layout_assign(graph, compact=args.compact_layout)
    backends.warm_up()
    rng = np.random.default_rng(args.seed)
    xs = rng.standard_normal((args.count,) + graph.input_shape).astype(np.float32)

    patched = None
    if args.inject_leak:
        from .runtime import kernels as _k

        kind = args.inject_leak
        original = _k._DISPATCH[kind]

        def leaky_emitter(ctx, *rest):
            branchy = _k.ExecContext(True, ctx.layout, ctx.rec,
                                     ctx.touched, ctx.capture)
            return original(branchy, *rest)

        _k._DISPATCH[kind] = leaky_emitter
        patched = (kind, original)

    try:
        base = None
        obl_ok = True
        first_sites = []
        for j in range(args.count):
            _, tr = traced_forward(graph, xs[j], ExecMode.OBLIVIOUS, layout,
                                   granularity=Granularity.FULL)
            if base is None:
                base = tr
                continue
            rep = trace_equal(base, tr)
            if not rep:
                obl_ok = False
                first_sites = [d.name for d in trace_diff(base, tr, layout)]
                break
        leak_sites = []
        _, l0 = traced_forward(graph, xs[0], ExecMode.LEAKY, layout,
                               granularity=Granularity.FULL)
        for j in range(1, min(args.count, 16)):
            _, lj = traced_forward(graph, xs[j], ExecMode.LEAKY, layout,
                                   granularity=Granularity.FULL)
            diffs = trace_diff(l0, lj, layout)
            if diffs:
                leak_sites = [d.name for d in diffs]
                break
    finally:
        if patched:
            from .runtime import kernels as _k
            _k._DISPATCH[patched[0]] = patched[1]

    if obl_ok:
        print(f"oblivious: {args.count} traces bit-identical")
    else:
        print(f"oblivious: DIVERGENCE at sites {first_sites}")
    if leak_sites:
        print(f"leaky: input-dependent sites observed: {leak_sites}")
    else:
        print("leaky: no divergence observed (unexpected for a branchy build)")
    ok = obl_ok and bool(leak_sites)
    print("verify:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    graph = _get_graph(args)
    layout = layout_assign(graph, compact=args.compact_layout)
    backends.warm_up()
    n = args.iterations
    rng = np.random.default_rng(args.seed)
    xs = rng.standard_normal((n,) + graph.input_shape).astype(np.float32)
    forward(graph, xs[0], ExecMode.LEAKY)
    forward(graph, xs[0], ExecMode.OBLIVIOUS)
    traced_forward(graph, xs[0], ExecMode.LEAKY, layout)

    t0 = time.perf_counter()
    for j in range(n):
        forward(graph, xs[j], ExecMode.LEAKY)
    leaky = (time.perf_counter() - t0) / n
    t0 = time.perf_counter()
    for j in range(n):
        forward(graph, xs[j], ExecMode.OBLIVIOUS)
    obliv = (time.perf_counter() - t0) / n
    t0 = time.perf_counter()
    for j in range(n):
        traced_forward(graph, xs[j], ExecMode.LEAKY, layout)
    traced = (time.perf_counter() - t0) / n

    ratio = obliv / leaky
    print(f"{'model':<10} {'leaky_ms':>10} {'oblivious_ms':>13} "
          f"{'traced_ms':>10} {'obl/leaky':>10}")
    print(f"{graph.name:<10} {leaky*1e3:>10.4f} {obliv*1e3:>13.4f} "
          f"{traced*1e3:>10.4f} {ratio:>10.3f}")
    if args.out:
        with open(args.out, "w") as f:
            f.write(f"# {_config_line(args, backend=backends.NAME)}\n")
            f.write("model,iterations,leaky_ms,oblivious_ms,traced_ms,ratio\n")
            f.write(f"{graph.name},{n},{leaky*1e3:.4f},{obliv*1e3:.4f},"
                    f"{traced*1e3:.4f},{ratio:.4f}\n")
        print(f"wrote {args.out}")
    return 0


def cmd_manifest(args) -> int:
    graph = _get_graph(args, weights=False)
    man = kernel_manifest(graph)
    print(f"model: {graph.name}")
    print(f"required kernels ({len(man.required)}/{len(man.registered)}):")
    for k in man.required:
        print(f"  {k}")
    print(f"registry reduction: {man.reduction:.4f}")
    if args.out:
        write_manifest_csv(man, args.out, header_comment=_config_line(args))
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="oblivinfer",
        description="DNN inference with a simulated memory-access channel: "
                    "train models, record traces, run the trace-based label "
                    "attack, and verify the branchless execution mode.",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, model_help):
        sp.add_argument("--model", required=True, help=model_help)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--compact-layout", action="store_true",
                        help="pack code blocks at cache-line instead of page stride")

    sp = sub.add_parser("train", help="train a model and save manifest + weights")
    common(sp, "architecture: mlp or lenet")
    sp.add_argument("--dataset", default=None, help="dataset root directory")
    sp.add_argument("--epochs", type=int, default=8)
    sp.add_argument("--pad32", action="store_true",
                    help="zero-pad 28x28 images to 32x32")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("trace", help="record channel traces for test inputs")
    common(sp, "model manifest path, or mlp/lenet for fresh random weights")
    sp.add_argument("--weights", default=None, help="override weights blob path")
    sp.add_argument("--dataset", default=None)
    sp.add_argument("--mode", choices=("leaky", "oblivious"), default="leaky")
    sp.add_argument("--granularity", choices=("full", "line", "page", "fault"),
                    default="page")
    sp.add_argument("--count", type=int, default=100,
                    help="number of test inputs to trace")
    sp.set_defaults(fn=cmd_trace)

    sp = sub.add_parser("attack", help="fit the label predictor on recorded traces")
    sp.add_argument("traces", help="directory produced by the trace subcommand")
    common(sp, "model manifest path or architecture name (shapes only)")
    sp.add_argument("--selector", choices=("last", "last2", "all"), default="last")
    sp.add_argument("--sizes", default="500,1000,2000,5000,10000",
                    help="comma-separated training-set sizes for the curve")
    sp.add_argument("--folds", type=int, default=9)
    sp.add_argument("--plot", action="store_true", help="also emit an SVG chart")
    sp.set_defaults(fn=cmd_attack)

    sp = sub.add_parser("verify", help="trace-equivalence sweep of both modes")
    common(sp, "model manifest path or architecture name")
    sp.add_argument("--weights", default=None)
    sp.add_argument("--count", type=int, default=100,
                    help="random inputs to sweep (>= 2)")
    sp.add_argument("--inject-leak", choices=INJECTABLE, default=None,
                    help="emit branchy events for one kind in oblivious mode "
                         "(checker self-test; must make verify fail)")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("bench", help="wall-clock table: leaky, oblivious, traced")
    common(sp, "model manifest path or architecture name")
    sp.add_argument("--weights", default=None)
    sp.add_argument("--iterations", type=int, default=100)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("manifest", help="kernel manifest and registry reduction")
    common(sp, "model manifest path or architecture name")
    sp.set_defaults(fn=cmd_manifest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _Usage as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DatasetError as e:
        missing = "not found" in str(e)
        print(f"error: {e}", file=sys.stderr)
        return 2 if missing else 1
    except (ModelError, TraceError, ExtractionError, TrainingError,
            ShapeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
