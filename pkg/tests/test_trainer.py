import math

import numpy as np
import numpy.testing as npt
import pytest

from slstm import trainer
from slstm.errors import NumericOverflowError
from slstm.mnist import SequenceDataset
from slstm.trainer import (DenseParams, MetricsLog, RmspropState, TrainConfig, dense_forward, evaluate,
                           init_model, rmsprop_update, softmax_xent, train_epoch)


def synthetic(n, seed=0, steps=28, width=28, balanced=True):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10 if balanced else rng.integers(0, 10, n)
    return SequenceDataset(rng.uniform(0, 1, (n, steps, width)), labels.astype(np.int64))


def snapshot_arrays(model, opt=None):
    out = [a.tobytes() for a in model.arrays()]
    if opt is not None:
        out += [s.tobytes() for s in opt.mean_square]
    return out


# ---- dense head ----

def test_dense_zero_params():
    p = DenseParams(np.zeros((10, 4)), np.zeros(10))
    npt.assert_array_equal(dense_forward(p, np.ones(4)), np.zeros(10))


def test_dense_bias_only():
    b = np.arange(10.0)
    npt.assert_array_equal(dense_forward(DenseParams(np.zeros((10, 4)), b), np.ones(4)), b)


def test_dense_matches_loops():
    rng = np.random.default_rng(0)
    p = DenseParams(rng.normal(size=(10, 6)), rng.normal(size=10))
    h = rng.normal(size=6)
    expected = [sum(p.W_hy[i, j] * h[j] for j in range(6)) + p.b_y[i] for i in range(10)]
    npt.assert_allclose(dense_forward(p, h), expected, rtol=1e-13)


# ---- loss ----

def test_xent_uniform_logits():
    loss, d = softmax_xent(np.full(10, 3.7), 4)
    assert loss == pytest.approx(math.log(10), abs=1e-12)
    npt.assert_allclose(d.sum(), 0.0, atol=1e-15)


def test_xent_saturated():
    z = np.zeros(10)
    z[2] = 50.0
    loss, _ = softmax_xent(z, 2)
    assert loss < 1e-20


def test_xent_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    z = rng.normal(0, 3, 10)
    loss, d = softmax_xent(z, 7)
    assert abs(d.sum()) < 1e-12
    h = 1e-6
    numeric = np.array([(softmax_xent(z + h * e, 7)[0] - softmax_xent(z - h * e, 7)[0]) / (2 * h)
                        for e in np.eye(10)])
    npt.assert_allclose(d, numeric, atol=1e-7)


def test_xent_large_logits_finite():
    loss, d = softmax_xent(np.array([1000.0, -1000.0, 0.0]), 1)
    assert loss == pytest.approx(2000.0)
    assert np.isfinite(d).all()


def test_xent_batched_rows():
    rng = np.random.default_rng(2)
    z, y = rng.normal(size=(4, 10)), np.array([0, 3, 9, 3])
    losses, d = softmax_xent(z, y)
    for k in range(4):
        lk, dk = softmax_xent(z[k], y[k])
        assert losses[k] == pytest.approx(lk, rel=1e-14)
        npt.assert_allclose(d[k], dk, rtol=1e-14)


@pytest.mark.parametrize("label", [-1, 10])
def test_xent_label_range(label):
    with pytest.raises(ValueError):
        softmax_xent(np.zeros(10), label)


# ---- optimizer ----

def test_rmsprop_zero_gradient_only_decays_state():
    p = [np.array([1.5, -2.0])]
    st = RmspropState(p, rho=0.9, eps=1e-8)
    st.mean_square[0][:] = [4.0, 1.0]
    before = p[0].copy()
    rmsprop_update(p, [np.zeros(2)], st, 1e-3)
    npt.assert_array_equal(p[0], before)
    npt.assert_allclose(st.mean_square[0], [3.6, 0.9], rtol=1e-15)


def test_rmsprop_first_step_magnitude():
    g = np.array([0.3, -2.0, 1e-3])
    p = [np.zeros(3)]
    st = RmspropState(p, rho=0.9, eps=1e-8)
    rmsprop_update(p, [g], st, 1e-3)
    npt.assert_allclose(np.abs(p[0]), 1e-3 * np.abs(g) / (np.sqrt(0.1 * g * g) + 1e-8), rtol=1e-14)
    npt.assert_array_equal(np.sign(p[0]), -np.sign(g))


def test_rmsprop_three_step_trace():
    rho, eps, lr = 0.9, 1e-8, 1e-3
    s, theta, expected = 0.0, 0.0, []
    for _ in range(3):
        s = rho * s + (1 - rho) * 1.0
        theta -= lr * 1.0 / (math.sqrt(s) + eps)
        expected.append(theta)
    p = [np.zeros(1)]
    st = RmspropState(p, rho, eps)
    got = []
    for _ in range(3):
        rmsprop_update(p, [np.ones(1)], st, lr)
        got.append(p[0][0])
    npt.assert_allclose(got, expected, atol=1e-12, rtol=0)


# ---- epoch loop ----

def test_zero_learning_rate_leaves_params_unchanged():
    data = synthetic(40)
    cfg = TrainConfig(variant="LSTM5", learning_rate=0.0, batch_size=16, epochs=1, hidden_dim=8)
    model = init_model(cfg.variant, cfg.activation, 28, 8, seed=0)
    before = snapshot_arrays(model)
    train_epoch(model, data, cfg, RmspropState(model.arrays()), epoch=1)
    assert snapshot_arrays(model) == before


def test_single_example_memorized():
    data = synthetic(1, seed=3)
    cfg = TrainConfig(variant="LSTM", epochs=40, batch_size=32, hidden_dim=20, learning_rate=1e-2)
    model, log = trainer.fit(data, data, cfg)
    assert log.records[-1].train_acc == 1.0
    assert evaluate(model, data)[1] == 1.0


def test_fit_is_deterministic(tmp_path):
    data = synthetic(50, seed=4)
    cfg = TrainConfig(variant="LSTM2", epochs=2, batch_size=8, hidden_dim=6, seed=5)
    paths = []
    for k in range(2):
        _, log = trainer.fit(data, data, cfg)
        path = tmp_path / f"run{k}.csv"
        log.write_csv(path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_threaded_batches_are_deterministic_and_close():
    data = synthetic(48, seed=6)
    results = []
    for threads in (1, 3, 3):
        cfg = TrainConfig(variant="LSTM", epochs=1, batch_size=16, hidden_dim=6, threads=threads)
        model, log = trainer.fit(data, data, cfg)
        results.append((model, log))
    (m1, _), (m3a, _), (m3b, _) = results
    assert snapshot_arrays(m3a) == snapshot_arrays(m3b)
    for a, b in zip(m1.arrays(), m3a.arrays()):
        npt.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_last_batch_may_be_short():
    data = synthetic(10)
    cfg = TrainConfig(epochs=1, batch_size=4, hidden_dim=4)
    model = init_model(cfg.variant, cfg.activation, 28, 4)
    rec = train_epoch(model, data, cfg, RmspropState(model.arrays()), epoch=1)
    assert 0.0 <= rec.train_acc <= 1.0 and rec.epoch == 1


def test_divergence_reports_epoch_and_batch():
    data = synthetic(8)
    cfg = TrainConfig(activation="relu", epochs=1, batch_size=4, hidden_dim=4)
    model = init_model(cfg.variant, cfg.activation, 28, 4)
    model.cell.U_c[...] = 1e300 * np.eye(4)
    model.cell.b_c[...] = 1.0
    with pytest.raises(NumericOverflowError) as info:
        train_epoch(model, data, cfg, RmspropState(model.arrays()), epoch=3)
    assert info.value.epoch == 3 and info.value.batch == 0


def test_empty_training_set_rejected():
    empty = SequenceDataset(np.zeros((0, 28, 28)), np.zeros(0, dtype=np.int64))
    cfg = TrainConfig(epochs=1, hidden_dim=4)
    model = init_model(cfg.variant, cfg.activation, 28, 4)
    with pytest.raises(ValueError):
        train_epoch(model, empty, cfg, RmspropState(model.arrays()), epoch=1)
    with pytest.raises(ValueError):
        evaluate(model, empty)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    assert TrainConfig(activation="sigmoid").activation.value == "logistic"
    d = TrainConfig()
    assert (d.hidden_dim, d.epochs, d.batch_size, d.learning_rate) == (100, 100, 32, 1e-3)


# ---- evaluation ----

def test_untrained_model_near_chance():
    data = synthetic(1000, seed=7)
    model = init_model("LSTM", "tanh", seed=1)
    _, acc = evaluate(model, data)
    assert abs(acc - 0.1) <= 0.05


def test_evaluate_is_pure():
    data = synthetic(30)
    model = init_model("LSTM1", "tanh", hidden_dim=8)
    opt = RmspropState(model.arrays())
    opt.mean_square[0][...] = 0.25
    before = snapshot_arrays(model, opt)
    evaluate(model, data, batch_size=7)
    assert snapshot_arrays(model, opt) == before


def test_argmax_ties_go_to_lowest_class():
    model = init_model("LSTM3", "tanh", hidden_dim=4)
    model.head.W_hy[...] = 0.0
    model.head.b_y[...] = 0.0
    model.head.b_y[[3, 6]] = 1.0
    data = SequenceDataset(np.zeros((2, 28, 28)), np.array([3, 6]))
    assert evaluate(model, data)[1] == 0.5


# ---- shuffling / metrics ----

def test_epoch_order_depends_only_on_seed_and_epoch():
    a = trainer.epoch_order(100, seed=1, epoch=2)
    assert np.array_equal(a, trainer.epoch_order(100, seed=1, epoch=2))
    assert not np.array_equal(a, trainer.epoch_order(100, seed=1, epoch=3))
    assert sorted(a) == list(range(100))


def test_metrics_log_order_and_drops(tmp_path):
    log = MetricsLog()
    accs = [0.9, 0.95, 0.89, 0.97, 0.7]
    for k, acc in enumerate(accs, start=1):
        log.append(trainer.EpochRecord(k, 0.1234567, 0.5, 0.2, acc, 1.5))
    with pytest.raises(ValueError):
        log.append(trainer.EpochRecord(9, 0, 0, 0, 0, 0))
    assert log.best_test_accuracy() == 0.97
    assert log.accuracy_drops(0.05) == [3, 5]
    log.write_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,test_loss,test_acc,seconds"
    assert lines[1] == "1,0.123457,0.5,0.2,0.9,"
    log.write_csv(tmp_path / "t.csv", include_time=True)
    assert (tmp_path / "t.csv").read_text().splitlines()[1].endswith(",1.5")
