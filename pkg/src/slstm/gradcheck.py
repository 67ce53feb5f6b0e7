"""Sweep comparing analytic BPTT gradients against central differences."""

from dataclasses import dataclass

import numpy as np

from .bptt import StateGrad, backward_sequence, finite_diff_grads, max_relative_error
from .cells import Variant, candidate_preactivation, forward_sequence, init_params, CellState
from .numkit import Activation
from .trainer import DenseParams, dense_forward, softmax_xent

TOLERANCE = 1e-5
EPSILON = 1e-5
KINK_MARGIN = 1e-3


@dataclass
class Instance:
    params: object
    head: DenseParams
    xs: np.ndarray
    init: CellState
    label: int
    h_weights: np.ndarray  # (T, hidden): direct linear loss on every h_t
    c_weights: np.ndarray  # (hidden,): linear loss on the final c


def random_instance(variant, rng, n_classes=3):
    n_in = int(rng.integers(1, 7))
    n_h = int(rng.integers(1, 6))
    steps = int(rng.integers(1, 5))
    params = init_params(variant, n_in, n_h, seed=int(rng.integers(2**31)))
    for a in params.arrays():
        a[...] = rng.normal(0.0, 0.7, a.shape)
    head = DenseParams(rng.normal(0.0, 1.0, (n_classes, n_h)), rng.normal(0.0, 1.0, n_classes))
    init = CellState(rng.uniform(-0.5, 0.5, n_h), rng.uniform(-0.5, 0.5, n_h))
    return Instance(params, head, rng.uniform(-1.0, 1.0, (steps, n_in)), init,
                    int(rng.integers(n_classes)), rng.normal(size=(steps, n_h)), rng.normal(size=n_h))


def instance_loss(inst, act, params=None):
    params = inst.params if params is None else params
    final, caches = forward_sequence(params, act, inst.xs, inst.init)
    loss, _ = softmax_xent(dense_forward(inst.head, final.h), inst.label)
    direct = sum(w @ c.h for w, c in zip(inst.h_weights, caches))
    return loss + direct + inst.c_weights @ final.c


def analytic_grads(inst, act):
    final, caches = forward_sequence(inst.params, act, inst.xs, inst.init)
    _, dlogits = softmax_xent(dense_forward(inst.head, final.h), inst.label)
    final_grad = StateGrad(dlogits @ inst.head.W_hy, inst.c_weights.copy())
    grads, _ = backward_sequence(inst.params, act, caches, final_grad, inst.h_weights)
    return grads


def near_kink(inst, act):
    """True when any relu input sits within KINK_MARGIN of zero."""
    _, caches = forward_sequence(inst.params, act, inst.xs, inst.init)
    for cache in caches:
        z = candidate_preactivation(inst.params, cache.x, cache.h_prev)
        if np.min(np.abs(z)) < KINK_MARGIN or np.min(np.abs(cache.c)) < KINK_MARGIN:
            return True
    return False


@dataclass
class CheckResult:
    variant: Variant
    activation: Activation
    worst: float
    instances: int
    skipped: int

    @property
    def passed(self):
        return self.worst <= TOLERANCE


def check_cell(variant, act, instances=20, seed=0, inject_fault=False):
    variant, act = Variant.parse(variant), Activation.parse(act)
    rng = np.random.default_rng([seed, list(Variant).index(variant), list(Activation).index(act)])
    worst, done, skipped = 0.0, 0, 0
    while done < instances:
        inst = random_instance(variant, rng)
        if act is Activation.RELU and near_kink(inst, act):
            skipped += 1
            continue
        analytic = analytic_grads(inst, act)
        if inject_fault:
            analytic.b_c[0] += 1e-3
        numeric = finite_diff_grads(lambda p: instance_loss(inst, act, p), inst.params, EPSILON,
                                    dtype=np.longdouble)
        worst = max(worst, max_relative_error(analytic, numeric))
        done += 1
    return CheckResult(variant, act, worst, done, skipped)


def sweep(activations=tuple(Activation), variants=tuple(Variant), instances=20, seed=0,
          inject_fault=False):
    return [check_cell(v, a, instances, seed, inject_fault) for v in variants for a in activations]
