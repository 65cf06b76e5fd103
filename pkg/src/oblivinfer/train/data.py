"""Dataset loading: IDX image/label files and 3073-byte-record CIFAR binaries.

Files are discovered under a root directory resolved from, in order: an
explicit argument, the ``OBLIVINFER_DATA`` environment variable, and
``./data``.  Gzipped files are detected by magic and decompressed
transparently.  Pixel values are scaled to [0, 1] float32.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DatasetError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


def data_root(explicit=None) -> str:
    if explicit:
        return explicit
    return os.environ.get("OBLIVINFER_DATA") or os.path.join(os.getcwd(), "data")


@dataclass
class LabelledDataset:
    images: np.ndarray  # float32, (N, 28, 28) or (N, C, H, W)
    labels: np.ndarray  # int64
    name: str

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "LabelledDataset":
        return LabelledDataset(self.images[idx], self.labels[idx], self.name)


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            return gzip.GzipFile(fileobj=f).read()
        return f.read()


def _find(root, name):
    for cand in (name, name + ".gz"):
        p = os.path.join(root, cand)
        if os.path.exists(p):
            return p
    raise DatasetError(f"{name} not found under {root}")


def read_idx_images(path: str) -> np.ndarray:
    data = _read_bytes(path)
    if len(data) < 16:
        raise DatasetError(f"{path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetError(f"{path}: bad IDX image magic 0x{magic:08x}")
    want = 16 + n * rows * cols
    if len(data) != want:
        raise DatasetError(f"{path}: {len(data)} bytes, header declares {want}")
    return np.frombuffer(data, np.uint8, offset=16).reshape(n, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    data = _read_bytes(path)
    if len(data) < 8:
        raise DatasetError(f"{path}: truncated IDX header")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DatasetError(f"{path}: bad IDX label magic 0x{magic:08x}")
    if len(data) != 8 + n:
        raise DatasetError(f"{path}: {len(data)} bytes, header declares {8 + n}")
    return np.frombuffer(data, np.uint8, offset=8).astype(np.int64)


def write_idx_images(path: str, images: np.ndarray):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(np.ascontiguousarray(images, np.uint8).tobytes())


def write_idx_labels(path: str, labels: np.ndarray):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(np.ascontiguousarray(labels, np.uint8).tobytes())


def load_mnist(root=None, split="train", pad32=False) -> LabelledDataset:
    """28x28 grayscale digits; ``pad32`` zero-pads the frame to 32x32."""
    root = data_root(root)
    img_name, lbl_name = MNIST_FILES[split]
    images = read_idx_images(_find(root, img_name))
    labels = read_idx_labels(_find(root, lbl_name))
    if len(images) != len(labels):
        raise DatasetError(
            f"{split}: {len(images)} images but {len(labels)} labels"
        )
    x = images.astype(np.float32) / np.float32(255.0)
    if pad32:
        r, c = x.shape[1:]
        padded = np.zeros((len(x), 32, 32), np.float32)
        ro, co = (32 - r) // 2, (32 - c) // 2
        padded[:, ro:ro + r, co:co + c] = x
        x = padded
    return LabelledDataset(x, labels, f"mnist-{split}")


def load_cifar10(root=None, split="train") -> LabelledDataset:
    """(N, 3, 32, 32) color images from the binary batch format."""
    root = data_root(root)
    imgs = []
    lbls = []
    for name in CIFAR_FILES[split]:
        data = _read_bytes(_find(root, name))
        if len(data) == 0 or len(data) % CIFAR_RECORD:
            raise DatasetError(
                f"{name}: {len(data)} bytes is not a multiple of {CIFAR_RECORD}"
            )
        rec = np.frombuffer(data, np.uint8).reshape(-1, CIFAR_RECORD)
        labels = rec[:, 0].astype(np.int64)
        if labels.max() > 9:
            raise DatasetError(f"{name}: label {labels.max()} out of range")
        imgs.append(rec[:, 1:].reshape(-1, 3, 32, 32))
        lbls.append(labels)
    x = np.concatenate(imgs).astype(np.float32) / np.float32(255.0)
    return LabelledDataset(x, np.concatenate(lbls), f"cifar10-{split}")
