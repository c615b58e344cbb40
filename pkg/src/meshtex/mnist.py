"""MNIST comparison of plain and 4-fold-invariant image convolutions.

The baseline network is two 3x3 convolutions (each followed by ReLU
and a 2x2 max pool) and two fully connected layers. The invariant
variant replaces both convolutions with the category-weighted window
convolution whose output does not depend on the 90-degree orientation
of the window frame.
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import DataError
from .network import train

DATA_ENV = "TXN_DATA_DIR"
IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _open_idx(path: Path):
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx(path) -> np.ndarray:
    """Read an IDX array (optionally gzipped), checking the magic."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file missing: {path}")
    raw = _open_idx(path)
    if len(raw) < 8:
        raise DataError(f"truncated IDX file: {path}")
    magic, n = struct.unpack(">II", raw[:8])
    if magic == IMAGE_MAGIC:
        rows, cols = struct.unpack(">II", raw[8:16])
        data = np.frombuffer(raw, dtype=np.uint8, offset=16)
        if data.size != n * rows * cols:
            raise DataError(f"IDX payload size mismatch: {path}")
        return data.reshape(n, rows, cols)
    if magic == LABEL_MAGIC:
        data = np.frombuffer(raw, dtype=np.uint8, offset=8)
        if data.size != n:
            raise DataError(f"IDX payload size mismatch: {path}")
        return data
    raise DataError(f"bad IDX magic 0x{magic:08x} in {path}")


def resolve_data_dir(data_dir=None) -> Path:
    if data_dir is not None:
        return Path(data_dir)
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    return Path("data/mnist")


def load_mnist(data_dir=None):
    """(train_x, train_y, test_x, test_y); images float32 in [0, 1]."""
    root = resolve_data_dir(data_dir)
    arrays = {}
    for key, stem in FILES.items():
        path = root / stem
        if not path.exists() and (root / (stem + ".gz")).exists():
            path = root / (stem + ".gz")
        arrays[key] = load_idx(path)
    tx = arrays["train_images"].astype(np.float32) / 255.0
    ex = arrays["test_images"].astype(np.float32) / 255.0
    return tx, arrays["train_labels"].astype(np.int64), \
        ex, arrays["test_labels"].astype(np.int64)


def init_params(variant: str, seed: int, dtype=np.float32) -> ad.ParamStore:
    rng = np.random.default_rng(seed)
    store = ad.ParamStore(dtype=dtype)

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    c1, c2, fc = 32, 64, 128
    if variant == "baseline":
        store.add("conv1/w", he((3, 3, 1, c1), 9))
        store.add("conv1/b", np.zeros(c1))
        store.add("conv2/w", he((3, 3, c1, c2), 9 * c1))
        store.add("conv2/b", np.zeros(c2))
        flat = 5 * 5 * c2
    elif variant == "rosy":
        for li, (ci, co) in enumerate(((1, c1), (c1, c2)), start=1):
            for h in ("h1", "h2", "h3"):
                store.add(f"conv{li}/{h}", he((ci, co), ci))
            store.add(f"conv{li}/b", np.zeros(co))
        flat = 7 * 7 * c2
    else:
        raise DataError(f"unknown variant: {variant}")
    store.add("fc1/w", he((flat, fc), flat))
    store.add("fc1/b", np.zeros(fc))
    store.add("fc2/w", he((fc, 10), fc))
    store.add("fc2/b", np.zeros(10))
    return store


def forward(store: ad.ParamStore, images: np.ndarray, variant: str,
            frame_rotation: int = 0) -> ad.Tensor:
    """Logits for a (B, 28, 28) image batch."""
    x = ad.Tensor(images[..., None].astype(store.dtype))
    if variant == "baseline":
        x = ad.relu(ad.conv3x3_valid(x, store["conv1/w"], store["conv1/b"]))
        x, _ = ad.maxpool2x2(x)
        x = ad.relu(ad.conv3x3_valid(x, store["conv2/w"], store["conv2/b"]))
        x, _ = ad.maxpool2x2(x)
    else:
        x, m = ad.texture_conv2d(x, store["conv1/h1"], store["conv1/h2"],
                                 store["conv1/h3"], store["conv1/b"],
                                 frame_rotation=frame_rotation)
        x, m = ad.maxpool2x2(x, m)
        x, m = ad.texture_conv2d(x, store["conv2/h1"], store["conv2/h2"],
                                 store["conv2/h3"], store["conv2/b"],
                                 frame_rotation=frame_rotation)
        x, _ = ad.maxpool2x2(x, m)
    x = ad.reshape(x, (x.shape[0], -1))
    x = ad.relu(ad.add(ad.matmul(x, store["fc1/w"]), store["fc1/b"]))
    return ad.add(ad.matmul(x, store["fc2/w"]), store["fc2/b"])


def evaluate(store: ad.ParamStore, images, labels, variant: str,
             batch: int = 256) -> float:
    correct = 0
    for lo in range(0, len(images), batch):
        logits = forward(store, images[lo:lo + batch], variant)
        correct += int((logits.data.argmax(axis=1)
                        == labels[lo:lo + batch]).sum())
    return correct / len(images)


def mnist_experiment(variant: str = "rosy", epochs: int = 5, seed: int = 0,
                     data_dir=None, batch: int = 64, lr: float = 1e-3,
                     train_limit: int | None = None, log=None):
    """Train one variant and return (test accuracy, history, params).

    train_limit restricts the training set (for fast determinism
    checks); None uses the full 60k split.
    """
    tx, ty, ex, ey = load_mnist(data_dir)
    if train_limit is not None:
        tx, ty = tx[:train_limit], ty[:train_limit]
    store = init_params(variant, seed)

    batches = [(tx[lo:lo + batch], ty[lo:lo + batch])
               for lo in range(0, len(tx), batch)]

    def loss_fn(b):
        images, labels = b
        logits = forward(store, images, variant)
        loss, probs = ad.softmax_cross_entropy(logits, labels)
        n_ok = int((probs.argmax(axis=1) == labels).sum())
        return loss, n_ok, len(labels)

    history = train(store, loss_fn, batches, optimizer="adam",
                    epochs=epochs, lr=lr, seed=seed + 1, log=log)
    accuracy = evaluate(store, ex, ey, variant)
    return accuracy, history, store
