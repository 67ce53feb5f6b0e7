"""Small dense kernels on float64 numpy arrays.

A ``Vector`` is a 1-D array; a ``Matrix`` is a 2-D row-major array. Every
kernel also accepts a leading batch axis on its vector argument, so a batch of
row vectors of shape ``(batch, n)`` flows through the same code paths.
"""

from enum import Enum

import numpy as np

from .errors import DimensionError

DTYPE = np.float64

# Largest float64 strictly below 1.0.
_ONE_MINUS = np.nextafter(1.0, 0.0)
_TINY = np.nextafter(0.0, 1.0)


class Activation(str, Enum):
    TANH = "tanh"
    LOGISTIC = "logistic"
    RELU = "relu"

    @classmethod
    def parse(cls, name):
        """Accept ``sigmoid`` as an alias of ``logistic``."""
        if isinstance(name, cls):
            return name
        key = str(name).lower()
        if key == "sigmoid":
            key = "logistic"
        return cls(key)


def vector(values):
    return np.asarray(values, dtype=DTYPE)


def matrix(rows):
    m = np.asarray(rows, dtype=DTYPE)
    if m.ndim != 2:
        raise DimensionError(f"matrix needs 2 dimensions, got shape {m.shape}")
    return m


def matvec(m, v):
    """``m @ v`` for a vector, or row-wise ``v @ m.T`` for a batch of vectors."""
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    if v.shape[-1] != m.shape[1]:
        raise DimensionError(
            f"matvec: matrix is {m.shape[0]}x{m.shape[1]} but vector has length {v.shape[-1]}")
    return v @ m.T


def hadamard(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"hadamard: lengths {a.shape[-1]} and {b.shape[-1]} differ")
    return a * b


def logistic(x):
    # exp(-|x|) never overflows; both branches agree at x = 0.
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    # keep gates strictly inside (0, 1) even where float64 would round to an endpoint
    return np.clip(out, _TINY, _ONE_MINUS)


def tanh(x):
    return np.clip(np.tanh(x), -_ONE_MINUS, _ONE_MINUS)


def relu(x):
    return np.maximum(x, 0.0)


_FORWARD = {
    Activation.TANH: tanh,
    Activation.LOGISTIC: logistic,
    Activation.RELU: relu,
}


def apply_activation(kind, v):
    return _FORWARD[Activation.parse(kind)](v)


def activation_grad(kind, out):
    """Derivative of the activation expressed through its *output* value.

    relu uses 0 at the kink.
    """
    kind = Activation.parse(kind)
    if kind is Activation.TANH:
        return 1.0 - out * out
    if kind is Activation.LOGISTIC:
        return out * (1.0 - out)
    return (out > 0.0).astype(DTYPE)
