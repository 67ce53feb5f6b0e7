"""Forward pass of the standard LSTM cell and its five reduced-gate variants.

Every variant shares one step routine. What differs is which terms each of
the three gates (input, forget, output) keeps:

=======  ==========  ============  ==========  ====
variant  W (input)   U (recurrent) u (diag)    bias
=======  ==========  ============  ==========  ====
LSTM     yes         yes           -           yes
LSTM1    -           yes           -           yes
LSTM2    -           yes           -           -
LSTM3    -           -             -           yes
LSTM4    -           -             yes         -
LSTM5    -           -             yes         yes
=======  ==========  ============  ==========  ====

The candidate path ``W_c x + U_c h + b_c`` is the same for all six.
"""

import copy
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from . import numkit
from .errors import DimensionError, NumericOverflowError
from .numkit import Activation


class Variant(str, Enum):
    LSTM = "LSTM"
    LSTM1 = "LSTM1"
    LSTM2 = "LSTM2"
    LSTM3 = "LSTM3"
    LSTM4 = "LSTM4"
    LSTM5 = "LSTM5"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        return cls(str(name).upper())

    @property
    def structure(self):
        return GATE_STRUCTURE[self]

    @property
    def has_gate_input_weights(self):
        return self.structure.W

    @property
    def has_gate_recurrent_matrix(self):
        return self.structure.U

    @property
    def has_gate_recurrent_vector(self):
        return self.structure.u

    @property
    def has_gate_bias(self):
        return self.structure.b


class GateStructure(NamedTuple):
    W: bool
    U: bool
    u: bool
    b: bool


GATE_STRUCTURE = {
    Variant.LSTM: GateStructure(W=True, U=True, u=False, b=True),
    Variant.LSTM1: GateStructure(W=False, U=True, u=False, b=True),
    Variant.LSTM2: GateStructure(W=False, U=True, u=False, b=False),
    Variant.LSTM3: GateStructure(W=False, U=False, u=False, b=True),
    Variant.LSTM4: GateStructure(W=False, U=False, u=True, b=False),
    Variant.LSTM5: GateStructure(W=False, U=False, u=True, b=True),
}

GATE_NAMES = ("gate_i", "gate_f", "gate_o")
GATE_FIELDS = ("W", "U", "u", "b")


@dataclass
class GateParams:
    W: Optional[np.ndarray] = None  # hidden x input
    U: Optional[np.ndarray] = None  # hidden x hidden
    u: Optional[np.ndarray] = None  # hidden
    b: Optional[np.ndarray] = None  # hidden


@dataclass
class CellParams:
    variant: Variant
    input_dim: int
    hidden_dim: int
    gate_i: GateParams
    gate_f: GateParams
    gate_o: GateParams
    W_c: np.ndarray
    U_c: np.ndarray
    b_c: np.ndarray

    def named_arrays(self):
        """Every allocated parameter array, in the canonical order.

        The order is gate_i, gate_f, gate_o (each W, U, u, b where present),
        then W_c, U_c, b_c. Serialization and the optimizer rely on it.
        """
        out = []
        for gname in GATE_NAMES:
            gate = getattr(self, gname)
            for fname in GATE_FIELDS:
                arr = getattr(gate, fname)
                if arr is not None:
                    out.append((f"{gname}.{fname}", arr))
        out += [("W_c", self.W_c), ("U_c", self.U_c), ("b_c", self.b_c)]
        return out

    def arrays(self):
        return [a for _, a in self.named_arrays()]

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def zeros_like(self):
        clone = copy.deepcopy(self)
        for a in clone.arrays():
            a[...] = 0.0
        return clone

    def copy(self):
        return copy.deepcopy(self)

    def astype(self, dtype):
        clone = copy.deepcopy(self)
        for gname in GATE_NAMES:
            gate = getattr(clone, gname)
            for fname in GATE_FIELDS:
                arr = getattr(gate, fname)
                if arr is not None:
                    setattr(gate, fname, arr.astype(dtype))
        clone.W_c, clone.U_c, clone.b_c = (a.astype(dtype) for a in (clone.W_c, clone.U_c, clone.b_c))
        return clone


class CellState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


@dataclass
class StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    c_tilde: np.ndarray
    c: np.ndarray
    act_c: np.ndarray
    h: np.ndarray


def zero_state(hidden_dim, batch=None):
    shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
    return CellState(np.zeros(shape), np.zeros(shape))


def _glorot(rng, rows, cols):
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    # sign fix makes the draw uniform over the orthogonal group
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def init_params(variant, input_dim, hidden_dim, seed=0):
    """Seeded initialization.

    W-type matrices are Glorot-uniform, U-type matrices orthogonal, u-vectors
    uniform(-0.5, 0.5), biases zero except the forget-gate bias, which starts
    at 1 when the variant has gate biases.
    """
    variant = Variant.parse(variant)
    if input_dim < 1 or hidden_dim < 1:
        raise DimensionError(f"dimensions must be positive, got input={input_dim} hidden={hidden_dim}")
    rng = np.random.default_rng(seed)
    s = variant.structure
    gates = {}
    for gname in GATE_NAMES:
        g = GateParams()
        if s.W:
            g.W = _glorot(rng, hidden_dim, input_dim)
        if s.U:
            g.U = _orthogonal(rng, hidden_dim)
        if s.u:
            g.u = rng.uniform(-0.5, 0.5, size=hidden_dim)
        if s.b:
            g.b = np.ones(hidden_dim) if gname == "gate_f" else np.zeros(hidden_dim)
        gates[gname] = g
    W_c = _glorot(rng, hidden_dim, input_dim)
    U_c = _orthogonal(rng, hidden_dim)
    b_c = np.zeros(hidden_dim)
    return CellParams(variant, input_dim, hidden_dim, W_c=W_c, U_c=U_c, b_c=b_c, **gates)


def gate_preactivation(g, x, h_prev):
    """W x + U h_prev + u * h_prev + b over whichever terms the gate has."""
    z = np.zeros(h_prev.shape)
    if g.W is not None:
        z = z + numkit.matvec(g.W, x)
    if g.U is not None:
        z = z + numkit.matvec(g.U, h_prev)
    if g.u is not None:
        z = z + numkit.hadamard(g.u, h_prev)
    if g.b is not None:
        z = z + g.b
    return z


def candidate_preactivation(params, x, h_prev):
    return numkit.matvec(params.W_c, x) + numkit.matvec(params.U_c, h_prev) + params.b_c


def step(params, act, x, prev):
    """One time step. ``x`` may be ``(input,)`` or ``(batch, input)``."""
    act = Activation.parse(act)
    if x.shape[-1] != params.input_dim:
        raise DimensionError(f"input has width {x.shape[-1]}, cell expects {params.input_dim}")
    h_prev, c_prev = prev
    if h_prev.shape[-1] != params.hidden_dim or c_prev.shape != h_prev.shape:
        raise DimensionError(
            f"state shapes {h_prev.shape}/{c_prev.shape} do not match hidden_dim={params.hidden_dim}")

    # overflow is detected below and raised as NumericOverflowError
    with np.errstate(over="ignore", invalid="ignore"):
        i = numkit.logistic(gate_preactivation(params.gate_i, x, h_prev))
        f = numkit.logistic(gate_preactivation(params.gate_f, x, h_prev))
        o = numkit.logistic(gate_preactivation(params.gate_o, x, h_prev))
        c_tilde = numkit.apply_activation(act, candidate_preactivation(params, x, h_prev))
        c = f * c_prev + i * c_tilde
        act_c = numkit.apply_activation(act, c)
        h = o * act_c
    if not (np.isfinite(c).all() and np.isfinite(h).all()):
        raise NumericOverflowError("non-finite cell state: the forward pass diverged")
    cache = StepCache(x=x, h_prev=h_prev, c_prev=c_prev, i=i, f=f, o=o,
                      c_tilde=c_tilde, c=c, act_c=act_c, h=h)
    return CellState(h, c), cache


def forward_sequence(params, act, xs, init=None):
    """Fold ``step`` over the first axis of ``xs``.

    ``xs`` is ``(T, input)`` or time-major ``(T, batch, input)``.
    """
    if init is None:
        batch = None if np.ndim(xs) < 3 else np.shape(xs)[1]
        init = zero_state(params.hidden_dim, batch)
    state = init
    caches = []
    for x in xs:
        state, cache = step(params, act, x, state)
        caches.append(cache)
    return state, caches


def gate_param_count(variant, input_dim, hidden_dim):
    s = Variant.parse(variant).structure
    per_gate = (s.W * input_dim * hidden_dim + s.U * hidden_dim * hidden_dim
                + s.u * hidden_dim + s.b * hidden_dim)
    return 3 * per_gate


def param_count(variant, input_dim, hidden_dim, output_dim):
    """Adaptive scalars in the cell plus the dense output head."""
    candidate = input_dim * hidden_dim + hidden_dim * hidden_dim + hidden_dim
    head = hidden_dim * output_dim + output_dim
    return gate_param_count(variant, input_dim, hidden_dim) + candidate + head


def embed_in_full_lstm(params):
    """Rewrite reduced-gate params as an equivalent full LSTM.

    Missing terms become zeros and u-vectors become diagonal U matrices.
    """
    if params.variant is Variant.LSTM:
        raise ValueError("params are already a full LSTM")
    n_in, n_h = params.input_dim, params.hidden_dim
    gates = {}
    for gname in GATE_NAMES:
        g = getattr(params, gname)
        if g.U is not None:
            U = g.U.copy()
        elif g.u is not None:
            U = np.diag(g.u)
        else:
            U = np.zeros((n_h, n_h))
        gates[gname] = GateParams(
            W=g.W.copy() if g.W is not None else np.zeros((n_h, n_in)),
            U=U,
            b=g.b.copy() if g.b is not None else np.zeros(n_h),
        )
    return CellParams(Variant.LSTM, n_in, n_h, W_c=params.W_c.copy(), U_c=params.U_c.copy(),
                      b_c=params.b_c.copy(), **gates)
