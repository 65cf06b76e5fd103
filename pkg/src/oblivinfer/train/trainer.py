"""Minibatch SGD training on the same numeric kernels the engine runs.

The batched forward here performs the same per-element arithmetic as
single-sample execution: elementwise activations, the fixed-order matmul
and conv kernels, and a row-wise softmax whose reduction order matches
the single-row scan for the class counts used here.  Labels predicted by
``predict_batch`` therefore agree bit for bit with engine execution.

``loss_and_grads`` is dtype-generic: pass float64 inputs and a float64
parameter list and the whole pipeline runs in float64, which is what the
finite-difference checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import backends
from ..errors import ShapeError, TrainingError
from ..runtime.graph import ModelGraph, lenet_graph, mlp_graph
from .data import LabelledDataset


@dataclass
class TrainConfig:
    epochs: int = 6
    batch_size: int = 128
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True
    verbose: bool = False


def prepare_inputs(graph: ModelGraph, images: np.ndarray) -> np.ndarray:
    """(N, ...) pixel array -> (N, *input_shape) float32."""
    n = len(images)
    want = graph.input_shape
    if int(np.prod(images.shape[1:])) != int(np.prod(want)):
        raise ShapeError(
            f"cannot feed {images.shape[1:]} into input shape {want}"
        )
    x = np.ascontiguousarray(images, np.float32)
    return x.reshape((n,) + want)


def _rowwise_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def _elementwise(spec, flat):
    kind = spec.kind
    h = spec.hyper
    if kind == "relu":
        return backends.threshold_leaky(flat, 0.0, 0.0)
    if kind == "threshold":
        return backends.threshold_leaky(flat, h["threshold"], h["val"])
    if kind == "leakyrelu":
        return backends.leakyrelu_leaky(flat, h["negative_slope"])
    if kind == "hardtanh":
        return backends.hardtanh_leaky(flat, h["min_val"], h["max_val"])
    raise TrainingError(f"not an elementwise kind: {kind}")


def forward_batch(graph: ModelGraph, xb: np.ndarray, params=None) -> np.ndarray:
    """Class probabilities, one row per sample."""
    if params is None:
        params = graph.params
    x = xb
    for spec, p in zip(graph.layers, params):
        h = spec.hyper
        kind = spec.kind
        if kind == "dense":
            x = backends.matmul(x.reshape(len(x), -1), p["weight"]) + p["bias"]
        elif kind == "conv2d":
            x = backends.conv2d(x, p["weight"], p["bias"],
                                tuple(h["stride"]), tuple(h["padding"]))
        elif kind == "batchnorm":
            b = (1, -1) + (1,) * (x.ndim - 2)
            eps = x.dtype.type(h["eps"])
            x = ((x - p["mean"].reshape(b)) / np.sqrt(p["var"].reshape(b) + eps)) \
                * p["gamma"].reshape(b) + p["beta"].reshape(b)
        elif kind in ("relu", "threshold", "leakyrelu", "hardtanh"):
            x = _elementwise(spec, np.ascontiguousarray(x).reshape(-1)).reshape(x.shape)
        elif kind == "maxpool2d":
            x = backends.maxpool2d(x, tuple(h["window"]), tuple(h["stride"]))[0]
        elif kind == "meanpool2d":
            x = backends.meanpool2d(x, tuple(h["window"]), tuple(h["stride"]))
        elif kind == "flatten":
            x = np.ascontiguousarray(x).reshape(len(x), -1)
        elif kind == "softmax":
            x = _rowwise_softmax(x.reshape(len(x), -1))
        else:
            raise TrainingError(f"batched forward does not support {kind!r}")
    if graph.layers[-1].kind != "softmax":
        x = _rowwise_softmax(x.reshape(len(x), -1))
    return x


def predict_batch(graph: ModelGraph, images: np.ndarray, batch_size=512) -> np.ndarray:
    xall = prepare_inputs(graph, images)
    out = np.empty(len(xall), np.int64)
    for s in range(0, len(xall), batch_size):
        probs = forward_batch(graph, xall[s:s + batch_size])
        out[s:s + batch_size] = np.argmax(probs, axis=1)
    return out


def evaluate(graph: ModelGraph, images: np.ndarray, labels: np.ndarray,
             batch_size=512) -> float:
    pred = predict_batch(graph, images, batch_size)
    return float(np.mean(pred == labels))


def loss_and_grads(graph: ModelGraph, xb: np.ndarray, yb: np.ndarray, params=None):
    """Mean cross-entropy over the batch and per-layer parameter gradients.

    Batchnorm statistics and affine terms are treated as frozen inference
    constants (zero gradient); the gradient still flows through to x.
    """
    if params is None:
        params = graph.params
    dtype = xb.dtype
    n = len(xb)
    caches = []
    x = xb
    for li, (spec, p) in enumerate(zip(graph.layers, params)):
        h = spec.hyper
        kind = spec.kind
        if kind == "dense":
            x2 = np.ascontiguousarray(x).reshape(n, -1)
            caches.append(x2)
            x = backends.matmul(x2, p["weight"]) + p["bias"]
        elif kind == "conv2d":
            caches.append(x)
            x = backends.conv2d(x, p["weight"], p["bias"],
                                tuple(h["stride"]), tuple(h["padding"]))
        elif kind == "batchnorm":
            b = (1, -1) + (1,) * (x.ndim - 2)
            eps = dtype.type(h["eps"])
            scale = (p["gamma"] / np.sqrt(p["var"] + eps)).reshape(b)
            caches.append(scale)
            x = (x - p["mean"].reshape(b)) * scale + p["beta"].reshape(b)
        elif kind in ("relu", "threshold", "leakyrelu", "hardtanh"):
            flat = np.ascontiguousarray(x).reshape(-1)
            out = _elementwise(spec, flat).reshape(x.shape)
            if kind in ("relu", "threshold"):
                # the rewrite arm has zero slope; at the boundary it wins
                grad = (flat > dtype.type(h.get("threshold", 0.0))).astype(dtype)
            elif kind == "leakyrelu":
                slope = dtype.type(h["negative_slope"])
                grad = np.where(flat > 0, dtype.type(1), slope)
            else:
                lo, hi = dtype.type(h["min_val"]), dtype.type(h["max_val"])
                grad = ((flat >= lo) & (flat <= hi)).astype(dtype)
            caches.append(grad.reshape(x.shape))
            x = out
        elif kind == "maxpool2d":
            caches.append(x.shape)
            x, arg = backends.maxpool2d(x, tuple(h["window"]), tuple(h["stride"]))
            caches[-1] = (caches[-1], arg)
        elif kind == "meanpool2d":
            caches.append(x.shape)
            x = backends.meanpool2d(x, tuple(h["window"]), tuple(h["stride"]))
        elif kind == "flatten":
            caches.append(x.shape)
            x = np.ascontiguousarray(x).reshape(n, -1)
        elif kind == "softmax":
            if li != len(graph.layers) - 1:
                raise TrainingError("softmax is only trainable as the final layer")
            caches.append(None)
        else:
            raise TrainingError(f"training does not support {kind!r}")

    logits = np.asarray(x, np.float64).reshape(n, -1)
    probs = _rowwise_softmax(logits)
    eps = 1e-12
    loss = float(-np.mean(np.log(probs[np.arange(n), yb] + eps)))
    delta = probs.copy()
    delta[np.arange(n), yb] -= 1.0
    dy = (delta / n).astype(dtype)

    grads = [{} for _ in graph.layers]
    for li in range(len(graph.layers) - 1, -1, -1):
        spec = graph.layers[li]
        p = params[li]
        h = spec.hyper
        kind = spec.kind
        cache = caches[li]
        if kind == "dense":
            grads[li]["weight"] = backends.matmul(cache.T, dy)
            grads[li]["bias"] = dy.sum(axis=0)
            dy = backends.matmul(dy, p["weight"].T).reshape(cache.shape)
        elif kind == "conv2d":
            dw, db = backends.conv2d_dw(cache, dy, tuple(h["kernel"]),
                                        tuple(h["stride"]), tuple(h["padding"]))
            grads[li]["weight"] = dw
            grads[li]["bias"] = db
            dy = backends.conv2d_dx(dy, p["weight"], tuple(h["stride"]),
                                    tuple(h["padding"]), cache.shape[2:])
        elif kind == "batchnorm":
            for role in ("mean", "var", "gamma", "beta"):
                grads[li][role] = np.zeros_like(p[role])
            dy = dy * cache
        elif kind in ("relu", "threshold", "leakyrelu", "hardtanh"):
            dy = dy * cache
        elif kind == "maxpool2d":
            in_shape, arg = cache
            bsz, c, ih, iw = in_shape
            dx = np.zeros((bsz * c, ih * iw), dtype)
            rows = np.repeat(np.arange(bsz * c), arg.shape[2] * arg.shape[3])
            np.add.at(dx, (rows, arg.reshape(bsz * c, -1).ravel()),
                      dy.reshape(bsz * c, -1).ravel())
            dy = dx.reshape(in_shape)
        elif kind == "meanpool2d":
            bsz, c, ih, iw = cache
            kh, kw = h["window"]
            sh, sw = h["stride"]
            oh, ow = dy.shape[2], dy.shape[3]
            share = dy / dtype.type(kh * kw)
            dx = np.zeros(cache, dtype)
            for u in range(kh):
                for v in range(kw):
                    dx[:, :, u:u + sh * oh:sh, v:v + sw * ow:sw] += share
            dy = dx
        elif kind == "flatten":
            dy = dy.reshape(cache)
        # softmax final: already folded into the loss gradient
    return loss, grads


def sgd_step(params, grads, velocity, lr, momentum):
    for p, g, v in zip(params, grads, velocity):
        for role in p:
            v[role] *= momentum
            v[role] -= lr * g[role]
            p[role] += v[role]


def train_model(graph: ModelGraph, train: LabelledDataset, test: LabelledDataset,
                cfg: TrainConfig = None):
    """SGD with momentum; returns per-epoch history dicts."""
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    graph.init_params(rng)
    velocity = [
        {role: np.zeros_like(arr) for role, arr in p.items()}
        for p in graph.params
    ]
    xall = prepare_inputs(graph, train.images)
    yall = np.asarray(train.labels, np.int64)
    lr = np.float32(cfg.learning_rate)
    mu = np.float32(cfg.momentum)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xall)) if cfg.shuffle else np.arange(len(xall))
        total = 0.0
        batches = 0
        for s in range(0, len(xall), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = loss_and_grads(graph, xall[idx], yall[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}: {loss}")
            sgd_step(graph.params, grads, velocity, lr, mu)
            total += loss
            batches += 1
        acc = evaluate(graph, test.images, test.labels)
        row = {"epoch": epoch, "loss": total / max(batches, 1), "test_acc": acc}
        history.append(row)
        if cfg.verbose:
            print(f"epoch {epoch}  loss {row['loss']:.4f}  test_acc {acc:.4f}")
    return history


def train_mlp(train: LabelledDataset, test: LabelledDataset,
              cfg: TrainConfig = None, hidden=(256, 128), name="mlp"):
    in_units = int(np.prod(train.images.shape[1:]))
    graph = mlp_graph(name, in_units=in_units, hidden=hidden, classes=10)
    history = train_model(graph, train, test, cfg)
    return graph, history


def train_lenet(train: LabelledDataset, test: LabelledDataset,
                cfg: TrainConfig = None, name="lenet"):
    images = train.images
    if images.ndim == 3:
        in_channels = 1
    else:
        in_channels = images.shape[1]
    graph = lenet_graph(name, in_channels=in_channels, hw=images.shape[-1], classes=10)
    history = train_model(graph, train, test, cfg)
    return graph, history


def write_history_csv(path: str, history, comment: str = ""):
    with open(path, "w") as f:
        if comment:
            f.write(f"# {comment}\n")
        f.write("epoch,loss,test_acc\n")
        for row in history:
            f.write(f"{row['epoch']},{row['loss']:.6f},{row['test_acc']:.6f}\n")
