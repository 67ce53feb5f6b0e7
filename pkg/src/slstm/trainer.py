"""Classification head, loss, RMSprop and the epoch loop."""

import copy
import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import numkit
from .bptt import StateGrad, backward_sequence
from .cells import CellParams, Variant, forward_sequence, init_params
from .errors import DimensionError, NumericOverflowError
from .numkit import Activation

NUM_CLASSES = 10
CSV_HEADER = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "seconds")


@dataclass
class DenseParams:
    W_hy: np.ndarray  # output x hidden
    b_y: np.ndarray

    def arrays(self):
        return [self.W_hy, self.b_y]

    def zeros_like(self):
        return DenseParams(np.zeros_like(self.W_hy), np.zeros_like(self.b_y))


@dataclass
class Model:
    cell: CellParams
    head: DenseParams
    activation: Activation

    def arrays(self):
        return self.cell.arrays() + self.head.arrays()

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    variant: Variant = Variant.LSTM
    activation: Activation = Activation.TANH
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    hidden_dim: int = 100
    rho: float = 0.9
    eps: float = 1e-8
    threads: int = 1

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        self.activation = Activation.parse(self.activation)
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1 or self.hidden_dim < 1 or self.threads < 1:
            raise ValueError("batch_size, epochs, hidden_dim and threads must all be >= 1")
        if not 0.0 < self.rho < 1.0 or self.eps <= 0:
            raise ValueError("need 0 < rho < 1 and eps > 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    wall_seconds: float


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)

    def append(self, rec):
        expected = len(self.records) + 1
        if rec.epoch != expected:
            raise ValueError(f"epoch {rec.epoch} out of order, expected {expected}")
        self.records.append(rec)

    def best_test_accuracy(self):
        return max(r.test_acc for r in self.records)

    def accuracy_drops(self, threshold=0.05):
        """Epochs whose test accuracy fell more than ``threshold`` below the running max."""
        flagged, best = [], -1.0
        for r in self.records:
            if best - r.test_acc > threshold:
                flagged.append(r.epoch)
            best = max(best, r.test_acc)
        return flagged

    def write_csv(self, path, include_time=False):
        """Six-significant-digit CSV.

        The seconds column stays empty unless ``include_time`` is set, so two
        runs of the same configuration give byte-identical files.
        """
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self.records:
                w.writerow([r.epoch, f"{r.train_loss:.6g}", f"{r.train_acc:.6g}",
                            f"{r.test_loss:.6g}", f"{r.test_acc:.6g}",
                            f"{r.wall_seconds:.6g}" if include_time else ""])


def init_dense(hidden_dim, output_dim=NUM_CLASSES, seed=0):
    rng = np.random.default_rng([seed, 1])
    a = np.sqrt(6.0 / (hidden_dim + output_dim))
    return DenseParams(rng.uniform(-a, a, size=(output_dim, hidden_dim)), np.zeros(output_dim))


def init_model(variant, activation, input_dim=28, hidden_dim=100, output_dim=NUM_CLASSES, seed=0):
    cell = init_params(variant, input_dim, hidden_dim, seed)
    return Model(cell, init_dense(hidden_dim, output_dim, seed), Activation.parse(activation))


def dense_forward(p, h):
    if h.shape[-1] != p.W_hy.shape[1]:
        raise DimensionError(f"head expects hidden width {p.W_hy.shape[1]}, got {h.shape[-1]}")
    return numkit.matvec(p.W_hy, h) + p.b_y


def softmax_xent(logits, labels):
    """Cross-entropy of softmax(logits) via a max-shifted log-sum-exp.

    Works on one logit vector with an int label, or a ``(batch, classes)``
    array with an int array of labels; returns per-example loss and
    ``softmax - onehot``.
    """
    logits = np.asarray(logits)
    if not np.issubdtype(logits.dtype, np.floating):
        logits = logits.astype(np.float64)
    single = logits.ndim == 1
    z = np.atleast_2d(logits)
    y = np.atleast_1d(np.asarray(labels))
    n_cls = z.shape[1]
    if y.shape[0] != z.shape[0]:
        raise DimensionError("one label per row of logits required")
    if np.any(y < 0) or np.any(y >= n_cls):
        raise ValueError(f"label out of range [0, {n_cls})")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    loss = lse - shifted[rows, y]
    dlogits = np.exp(shifted - lse[:, None])
    dlogits[rows, y] -= 1.0
    if single:
        return loss[0], dlogits[0]
    return loss, dlogits


class RmspropState:
    def __init__(self, arrays, rho=0.9, eps=1e-8):
        if not 0.0 < rho < 1.0 or eps <= 0:
            raise ValueError("need 0 < rho < 1 and eps > 0")
        self.rho = rho
        self.eps = eps
        self.mean_square = [np.zeros_like(a) for a in arrays]


def rmsprop_update(params, grads, state, lr):
    """In-place RMSprop on parallel lists of parameter and gradient arrays."""
    if len(params) != len(grads) or len(params) != len(state.mean_square):
        raise DimensionError("params, grads and optimizer state are not congruent")
    rho, eps = state.rho, state.eps
    for p, g, s in zip(params, grads, state.mean_square):
        s *= rho
        s += (1.0 - rho) * g * g
        p -= lr * g / (np.sqrt(s) + eps)


def _batch_forward_backward(model, xs, labels):
    """Loss sum, correct count and summed gradients for one shard."""
    final, caches = forward_sequence(model.cell, model.activation, xs)
    logits = dense_forward(model.head, final.h)
    losses, dlogits = softmax_xent(logits, labels)
    if not np.isfinite(losses).all():
        raise NumericOverflowError("non-finite loss")
    correct = int((np.argmax(logits, axis=1) == labels).sum())
    head_grads = DenseParams(dlogits.T @ final.h, dlogits.sum(axis=0))
    dh = dlogits @ model.head.W_hy
    cell_grads, _ = backward_sequence(model.cell, model.activation, caches,
                                      StateGrad(dh, np.zeros_like(dh)))
    return float(losses.sum()), correct, cell_grads.arrays() + head_grads.arrays()


def _shards(n, k):
    bounds = np.linspace(0, n, min(k, n) + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def batch_gradients(model, xs, labels, threads=1, pool=None):
    """Mean loss gradient over a batch.

    ``xs`` is time-major ``(T, batch, input)``. With ``threads > 1`` the
    batch is split into contiguous shards whose gradients are summed in shard
    order, so the result is fixed for a given thread count.
    """
    n = labels.shape[0]
    shards = _shards(n, threads)
    work = [(model, xs[:, a:b], labels[a:b]) for a, b in shards]
    if pool is not None and len(work) > 1:
        results = list(pool.map(lambda w: _batch_forward_backward(*w), work))
    else:
        results = [_batch_forward_backward(*w) for w in work]
    loss_sum, correct = 0.0, 0
    total = None
    for l, c, g in results:
        loss_sum += l
        correct += c
        if total is None:
            total = g
        else:
            for acc, part in zip(total, g):
                acc += part
    for acc in total:
        acc /= n
    return loss_sum, correct, total


def epoch_order(n, seed, epoch):
    """Shuffle permutation; depends only on (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def evaluate(model, dataset, batch_size=1000):
    """Mean loss and accuracy over ``dataset``; parameters are not touched."""
    seqs, labels = dataset.sequences, dataset.labels
    n = labels.shape[0]
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    loss_sum, correct = 0.0, 0
    for start in range(0, n, batch_size):
        xs = seqs[start:start + batch_size].transpose(1, 0, 2)
        y = labels[start:start + batch_size]
        final, _ = forward_sequence(model.cell, model.activation, xs)
        logits = dense_forward(model.head, final.h)
        losses, _ = softmax_xent(logits, y)
        loss_sum += float(losses.sum())
        # argmax breaks ties toward the lowest class index
        correct += int((np.argmax(logits, axis=1) == y).sum())
    return loss_sum / n, correct / n


def train_epoch(model, train, cfg, opt_state, epoch, test=None, pool=None):
    """One pass over ``train`` in shuffled mini-batches.

    Returns an ``EpochRecord``; train loss/accuracy are accumulated over the
    batches as they are seen during the epoch.
    """
    n = train.labels.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    t0 = time.perf_counter()
    order = epoch_order(n, cfg.seed, epoch)
    loss_sum, correct = 0.0, 0
    params = model.arrays()
    for b, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        xs = train.sequences[idx].transpose(1, 0, 2)
        try:
            l, c, grads = batch_gradients(model, xs, train.labels[idx], cfg.threads, pool)
        except NumericOverflowError as exc:
            raise NumericOverflowError(f"{exc} at epoch {epoch}, batch {b}", epoch=epoch, batch=b) from exc
        loss_sum += l
        correct += c
        rmsprop_update(params, grads, opt_state, cfg.learning_rate)
    if test is not None:
        test_loss, test_acc = evaluate(model, test)
    else:
        test_loss, test_acc = float("nan"), float("nan")
    return EpochRecord(epoch, loss_sum / n, correct / n, test_loss, test_acc,
                       time.perf_counter() - t0)


def fit(train, test, cfg, model=None, on_epoch=None):
    """Run ``cfg.epochs`` epochs; returns the trained model and its MetricsLog."""
    if model is None:
        model = init_model(cfg.variant, cfg.activation, train.sequences.shape[2],
                           cfg.hidden_dim, NUM_CLASSES, cfg.seed)
    opt = RmspropState(model.arrays(), cfg.rho, cfg.eps)
    log = MetricsLog()
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            rec = train_epoch(model, train, cfg, opt, epoch, test, pool)
            log.append(rec)
            if on_epoch is not None:
                on_epoch(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return model, log
