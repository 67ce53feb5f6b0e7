"""Flat binary parameter snapshots.

Layout, all little-endian::

    bytes 0-5    b"SLSTM1"
    byte  6      variant index (0 = LSTM, 1..5 = LSTM1..LSTM5)
    bytes 7-18   uint32 input_dim, hidden_dim, output_dim (0 = no dense head)
    rest         float64 scalars: the cell arrays in CellParams.named_arrays()
                 order, each row-major, then W_hy and b_y if output_dim > 0
"""

import struct

import numpy as np

from .cells import Variant, init_params
from .trainer import DenseParams

MAGIC = b"SLSTM1"
_HEADER = struct.Struct("<6sB3I")


class SnapshotError(ValueError):
    pass


def dumps(cell, head=None):
    output_dim = 0 if head is None else head.b_y.shape[0]
    out = [_HEADER.pack(MAGIC, list(Variant).index(cell.variant), cell.input_dim,
                        cell.hidden_dim, output_dim)]
    arrays = cell.arrays() + ([] if head is None else head.arrays())
    out += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    return b"".join(out)


def loads(blob):
    """Inverse of ``dumps``; returns ``(cell, head_or_None)``."""
    if len(blob) < _HEADER.size:
        raise SnapshotError("snapshot shorter than its header")
    magic, vidx, n_in, n_h, n_out = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if vidx >= len(Variant):
        raise SnapshotError(f"unknown variant index {vidx}")
    cell = init_params(list(Variant)[vidx], n_in, n_h, seed=0)
    head = None
    if n_out:
        head = DenseParams(np.empty((n_out, n_h)), np.empty(n_out))
    arrays = cell.arrays() + ([] if head is None else head.arrays())
    expected = _HEADER.size + 8 * sum(a.size for a in arrays)
    if len(blob) != expected:
        raise SnapshotError(f"snapshot is {len(blob)} bytes, expected {expected}")
    pos = _HEADER.size
    for a in arrays:
        a[...] = np.frombuffer(blob, dtype="<f8", count=a.size, offset=pos).reshape(a.shape)
        pos += 8 * a.size
    return cell, head


def save(path, cell, head=None):
    with open(path, "wb") as fh:
        fh.write(dumps(cell, head))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
