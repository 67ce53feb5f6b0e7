"""Backpropagation through time for every cell variant.

Gradients live in a ``CellParams`` object with the same presence pattern as
the parameters they belong to (``CellGrads``), so a removed gate term never
receives a slot.
"""

from typing import NamedTuple

import numpy as np

from .cells import GATE_NAMES, CellParams
from .errors import DimensionError
from .numkit import Activation, activation_grad

CellGrads = CellParams


class StateGrad(NamedTuple):
    dh: np.ndarray
    dc: np.ndarray


def _check_congruent(params, cache):
    n_h = params.hidden_dim
    if cache.x.shape[-1] != params.input_dim or cache.h.shape[-1] != n_h:
        raise DimensionError(
            f"cache (input {cache.x.shape[-1]}, hidden {cache.h.shape[-1]}) does not match "
            f"params (input {params.input_dim}, hidden {n_h})")


def _accumulate_step(params, act, cache, upstream, grads):
    """Add one step's parameter gradients into ``grads``.

    Returns ``(prev_grad, dx)`` with the leading batch axis kept as given.
    """
    _check_congruent(params, cache)
    batched = cache.h.ndim == 2
    x, h_prev, c_prev = (np.atleast_2d(a) for a in (cache.x, cache.h_prev, cache.c_prev))
    i, f, o = (np.atleast_2d(a) for a in (cache.i, cache.f, cache.o))
    c_tilde, act_c = np.atleast_2d(cache.c_tilde), np.atleast_2d(cache.act_c)
    dh, dc = np.atleast_2d(upstream.dh), np.atleast_2d(upstream.dc)

    dc = dc + dh * o * activation_grad(act, act_c)
    dz = {
        "gate_i": dc * c_tilde * i * (1.0 - i),
        "gate_f": dc * c_prev * f * (1.0 - f),
        "gate_o": dh * act_c * o * (1.0 - o),
    }
    dz_c = dc * i * activation_grad(act, c_tilde)

    dx = dz_c @ params.W_c
    dh_prev = dz_c @ params.U_c
    grads.W_c += dz_c.T @ x
    grads.U_c += dz_c.T @ h_prev
    grads.b_c += dz_c.sum(axis=0)

    for gname in GATE_NAMES:
        g, gg, d = getattr(params, gname), getattr(grads, gname), dz[gname]
        if g.W is not None:
            gg.W += d.T @ x
            dx = dx + d @ g.W
        if g.U is not None:
            gg.U += d.T @ h_prev
            dh_prev = dh_prev + d @ g.U
        if g.u is not None:
            gg.u += (d * h_prev).sum(axis=0)
            dh_prev = dh_prev + d * g.u
        if g.b is not None:
            gg.b += d.sum(axis=0)

    dc_prev = dc * f
    if not batched:
        dh_prev, dc_prev, dx = dh_prev[0], dc_prev[0], dx[0]
    return StateGrad(dh_prev, dc_prev), dx


def backward_step(params, act, cache, upstream):
    """Gradients of one step given ``(dL/dh_t, dL/dc_t)``.

    Returns ``(grads, prev_grad, dx)``.
    """
    act = Activation.parse(act)
    grads = params.zeros_like()
    prev_grad, dx = _accumulate_step(params, act, cache, upstream, grads)
    return grads, prev_grad, dx


def backward_sequence(params, act, caches, final_grad, per_step_h_grads=None):
    """Right-to-left accumulation over a cached forward sequence.

    ``final_grad`` is the gradient w.r.t. the last state; ``per_step_h_grads``
    optionally adds a direct loss gradient on each ``h_t``. Returns
    ``(grads, dxs)`` with ``dxs`` in forward time order.
    """
    act = Activation.parse(act)
    grads = params.zeros_like()
    dxs = [None] * len(caches)
    upstream = final_grad
    for t in range(len(caches) - 1, -1, -1):
        if per_step_h_grads is not None:
            upstream = StateGrad(upstream.dh + per_step_h_grads[t], upstream.dc)
        upstream, dxs[t] = _accumulate_step(params, act, caches[t], upstream, grads)
    return grads, dxs


def finite_diff_grads(loss_fn, params, epsilon=1e-5, dtype=np.float64):
    """Central differences of ``loss_fn(params)`` w.r.t. every allocated scalar.

    ``dtype`` sets the precision the perturbed parameters (and hence the loss)
    are evaluated in. ``np.longdouble`` keeps cancellation noise in
    ``L(p+eps) - L(p-eps)`` well below the size of small gradient entries.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    probe = params.astype(dtype)
    grads = params.zeros_like()
    for arr, garr in zip(probe.arrays(), grads.arrays()):
        flat, gflat = arr.reshape(-1), garr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            plus = loss_fn(probe)
            flat[k] = orig - epsilon
            minus = loss_fn(probe)
            flat[k] = orig
            gflat[k] = (plus - minus) / (2.0 * epsilon)
    return grads


def max_relative_error(a, b, floor=1e-8):
    """Largest ``|a-b| / max(|a|, |b|, floor)`` over paired gradient sets."""
    worst = 0.0
    for x, y in zip(a.arrays(), b.arrays()):
        if x.size == 0:
            continue
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst
