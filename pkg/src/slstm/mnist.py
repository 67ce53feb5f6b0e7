"""IDX readers and the row-wise sequence view of MNIST."""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, IdxFormatError, IdxLengthError, LabelValueError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


@dataclass(frozen=True)
class RawImages:
    pixels: np.ndarray  # (N, 28, 28) uint8

    @property
    def count(self):
        return self.pixels.shape[0]


@dataclass(frozen=True)
class SequenceDataset:
    sequences: np.ndarray  # (N, T, width) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64

    def __len__(self):
        return self.labels.shape[0]

    def take(self, idx):
        return SequenceDataset(self.sequences[idx], self.labels[idx])


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw, path, magic, n_dims):
    size = 4 + 4 * n_dims
    if len(raw) < 4:
        raise IdxLengthError(f"{path}: header truncated ({len(raw)} bytes)")
    got = struct.unpack(">i", raw[:4])[0]
    if got != magic:
        raise IdxFormatError(f"{path}: bad magic number {got}, expected {magic}")
    if len(raw) < size:
        raise IdxLengthError(f"{path}: header truncated ({len(raw)} bytes)")
    return struct.unpack(f">{n_dims}i", raw[4:size]), raw[size:]


def load_idx_images(path):
    raw = _read_bytes(path)
    (n, rows, cols), body = _header(raw, path, IMAGE_MAGIC, 3)
    if rows != 28 or cols != 28:
        raise IdxFormatError(f"{path}: images are {rows}x{cols}, expected 28x28")
    need = n * rows * cols
    if len(body) < need:
        raise IdxLengthError(f"{path}: expected {need} pixel bytes, found {len(body)}")
    pixels = np.frombuffer(body, dtype=np.uint8, count=need).reshape(n, rows, cols)
    return RawImages(pixels)


def load_idx_labels(path):
    raw = _read_bytes(path)
    (n,), body = _header(raw, path, LABEL_MAGIC, 1)
    if len(body) < n:
        raise IdxLengthError(f"{path}: expected {n} label bytes, found {len(body)}")
    labels = np.frombuffer(body, dtype=np.uint8, count=n).astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        k = int(bad[0])
        raise LabelValueError(f"{path}: label {labels[k]} at index {k} is not a digit", index=k)
    return labels


def to_row_sequences(imgs, labels):
    """Each image becomes 28 steps of 28 pixels, top row first, scaled by 1/255."""
    labels = np.asarray(labels, dtype=np.int64)
    if imgs.count != labels.shape[0]:
        raise DimensionError(f"{imgs.count} images but {labels.shape[0]} labels")
    return SequenceDataset(imgs.pixels.astype(np.float64) / 255.0, labels)


def _stratified_quotas(counts, n):
    """Spread ``n`` as evenly as possible over classes, capped by availability.

    Leftover units go to the lowest class indices first.
    """
    quotas = np.zeros_like(counts)
    remaining = n
    open_ = counts > 0
    while remaining > 0 and open_.any():
        k = int(open_.sum())
        share, extra = divmod(remaining, k)
        for c in np.flatnonzero(open_):
            want = share + (1 if extra > 0 else 0)
            take = min(want, counts[c] - quotas[c])
            if want > share:
                extra -= 1
            quotas[c] += take
            remaining -= take
        open_ = quotas < counts
    return quotas


def subsample(ds, n, seed=0):
    """Deterministic class-stratified subset of ``n`` examples, in original order."""
    total = len(ds)
    if n < 10:
        raise ValueError("need at least 10 examples to stratify over 10 classes")
    if n > total:
        raise ValueError(f"requested {n} examples from a dataset of {total}")
    counts = np.bincount(ds.labels, minlength=10)
    quotas = _stratified_quotas(counts, n)
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(counts.shape[0]):
        members = np.flatnonzero(ds.labels == c)
        chosen.append(rng.permutation(members)[:quotas[c]])
    idx = np.sort(np.concatenate(chosen))
    return ds.take(idx)


def _locate(data_dir, name):
    for candidate in (name, name + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{name}[.gz] not found in {data_dir}")


def load_split(data_dir, train=True):
    images, labels = (TRAIN_IMAGES, TRAIN_LABELS) if train else (TEST_IMAGES, TEST_LABELS)
    imgs = load_idx_images(_locate(data_dir, images))
    return to_row_sequences(imgs, load_idx_labels(_locate(data_dir, labels)))


def write_idx_images(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">4i", IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">2i", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())
