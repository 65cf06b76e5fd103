"""Deterministic synthetic image corpora written in the on-disk formats
the loaders expect.

The digit corpus renders 5x7 glyph bitmaps into 28x28 frames through a
random affine warp (rotation, scale, shear, translation) with bilinear
resampling, then applies intensity jitter and additive noise.  The color
corpus fills 32x32 RGB frames with class-keyed oriented gradients plus
noise.  Both are reproducible functions of the seed and are cached on
disk, so repeated calls are cheap and every run sees identical data.
"""

from __future__ import annotations

import os

import numpy as np

from .data import (
    CIFAR_FILES,
    CIFAR_RECORD,
    MNIST_FILES,
    data_root,
    write_idx_images,
    write_idx_labels,
)

# 5x7 glyphs, rows top to bottom, LSB = leftmost column.
_GLYPHS = {
    0: (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    1: (0x04, 0x06, 0x04, 0x04, 0x04, 0x04, 0x0E),
    2: (0x0E, 0x11, 0x10, 0x08, 0x04, 0x02, 0x1F),
    3: (0x1F, 0x08, 0x04, 0x08, 0x10, 0x11, 0x0E),
    4: (0x08, 0x0C, 0x0A, 0x09, 0x1F, 0x08, 0x08),
    5: (0x1F, 0x01, 0x0F, 0x10, 0x10, 0x11, 0x0E),
    6: (0x0C, 0x02, 0x01, 0x0F, 0x11, 0x11, 0x0E),
    7: (0x1F, 0x10, 0x08, 0x04, 0x02, 0x02, 0x02),
    8: (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    9: (0x0E, 0x11, 0x11, 0x1E, 0x10, 0x08, 0x06),
}


def _glyph_array(digit: int) -> np.ndarray:
    rows = _GLYPHS[digit]
    out = np.zeros((7, 5), np.float32)
    for r, bits in enumerate(rows):
        for c in range(5):
            if bits >> c & 1:
                out[r, c] = 1.0
    return out


def _bilinear(src: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample src at fractional (ys, xs); outside the frame reads as 0."""
    h, w = src.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    out = np.zeros(ys.shape, np.float32)
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            wy = fy if dy else 1.0 - fy
            wx = fx if dx else 1.0 - fx
            vals = np.where(ok, src[yy.clip(0, h - 1), xx.clip(0, w - 1)], 0.0)
            out += (wy * wx * vals).astype(np.float32)
    return out


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One 28x28 uint8 frame of the given digit under a random warp."""
    glyph = _glyph_array(digit)
    theta = rng.uniform(-0.30, 0.30)
    scale = rng.uniform(2.7, 3.6)
    shear = rng.uniform(-0.25, 0.25)
    tx = rng.uniform(-2.5, 2.5)
    ty = rng.uniform(-2.5, 2.5)
    c, s = np.cos(theta), np.sin(theta)
    # forward map: glyph center -> frame center + (tx, ty)
    fwd = np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]]) * scale
    inv = np.linalg.inv(fwd)
    yy, xx = np.meshgrid(np.arange(28, dtype=np.float64),
                         np.arange(28, dtype=np.float64), indexing="ij")
    dy = yy - (13.5 + ty)
    dx = xx - (13.5 + tx)
    src_y = inv[0, 0] * dy + inv[0, 1] * dx + 3.0
    src_x = inv[1, 0] * dy + inv[1, 1] * dx + 2.0
    img = _bilinear(glyph, src_y, src_x)
    fg = rng.uniform(0.55, 1.0)
    img = img * fg + rng.normal(0.0, 0.06, img.shape).astype(np.float32)
    return (img.clip(0.0, 1.0) * 255.0).astype(np.uint8)


def make_digit_corpus(n: int, seed: int):
    """n frames with a balanced, shuffled label sequence."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % 10
    rng.shuffle(labels)
    images = np.empty((n, 28, 28), np.uint8)
    for i in range(n):
        images[i] = render_digit(int(labels[i]), rng)
    return images, labels


def ensure_digit_files(root=None, n_train=12000, n_test=10000, seed=7) -> str:
    """Write IDX train/test files under root unless already present."""
    root = data_root(root)
    os.makedirs(root, exist_ok=True)
    ti, tl = MNIST_FILES["train"]
    si, sl = MNIST_FILES["test"]
    paths = [os.path.join(root, p) for p in (ti, tl, si, sl)]
    if not all(os.path.exists(p) for p in paths):
        images, labels = make_digit_corpus(n_train, seed)
        write_idx_images(paths[0], images)
        write_idx_labels(paths[1], labels)
        images, labels = make_digit_corpus(n_test, seed + 1)
        write_idx_images(paths[2], images)
        write_idx_labels(paths[3], labels)
    return root


def render_color(label: int, rng: np.random.Generator) -> np.ndarray:
    """One (3, 32, 32) uint8 frame: class-keyed hue and gradient angle."""
    angle = label * (np.pi / 10.0) + rng.uniform(-0.2, 0.2)
    yy, xx = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    ramp = (np.cos(angle) * xx + np.sin(angle) * yy) / 32.0
    base = np.array([
        0.5 + 0.45 * np.cos(2.0 * np.pi * label / 10.0),
        0.5 + 0.45 * np.cos(2.0 * np.pi * label / 10.0 + 2.1),
        0.5 + 0.45 * np.cos(2.0 * np.pi * label / 10.0 + 4.2),
    ])
    img = base[:, None, None] * (0.35 + 0.65 * ramp[None])
    img = img + rng.normal(0.0, 0.08, img.shape)
    return (img.clip(0.0, 1.0) * 255.0).astype(np.uint8)


def ensure_color_files(root=None, n_train=5000, n_test=1000, seed=11) -> str:
    """Write CIFAR-layout binaries under root unless already present."""
    root = data_root(root)
    os.makedirs(root, exist_ok=True)
    names = list(CIFAR_FILES["train"]) + list(CIFAR_FILES["test"])
    paths = [os.path.join(root, p) for p in names]
    if all(os.path.exists(p) for p in paths):
        return root
    rng = np.random.default_rng(seed)
    per_batch = n_train // len(CIFAR_FILES["train"])
    for path, count in zip(paths, [per_batch] * 5 + [n_test]):
        labels = np.arange(count, dtype=np.int64) % 10
        rng.shuffle(labels)
        rec = np.empty((count, CIFAR_RECORD), np.uint8)
        for i in range(count):
            rec[i, 0] = labels[i]
            rec[i, 1:] = render_color(int(labels[i]), rng).ravel()
        with open(path, "wb") as f:
            f.write(rec.tobytes())
    return root


def _main(argv=None):
    import argparse

    p = argparse.ArgumentParser(
        prog="python3 -m oblivinfer.train.synth",
        description="Generate the synthetic digit and color corpora on disk.",
    )
    p.add_argument("--out", default=None, help="dataset root (default: "
                   "OBLIVINFER_DATA or ./data)")
    p.add_argument("--train", type=int, default=12000)
    p.add_argument("--test", type=int, default=10000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--color", action="store_true",
                   help="also write the 32x32 color batches")
    args = p.parse_args(argv)
    root = ensure_digit_files(args.out, args.train, args.test, args.seed)
    print(f"digit corpus ready under {root}")
    if args.color:
        ensure_color_files(args.out, seed=args.seed + 100)
        print(f"color corpus ready under {root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(_main())
