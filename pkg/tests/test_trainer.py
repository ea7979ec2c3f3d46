import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strassen_lab import autodiff as ad
from strassen_lab import trainer as T
from strassen_lab.data import TaskInstance, generate
from strassen_lab.nn import Model, ModelShape
from strassen_lab.oracles import MASK


def _loss(logits, targets):
    return float(T.bce_masked_loss(np.asarray(logits, float), np.asarray(targets)))


def test_bce_cases():
    assert _loss([[20.0, -20.0]], [[1, 0]]) < 1e-8
    assert math.isclose(_loss([[0.0, 5.0, -3.0]], [[1, MASK, MASK]]), math.log(2), rel_tol=1e-15)
    z, y = np.array([[0.3, -1.2, 2.0]]), np.array([[1, 0, 0]])
    s = 1 / (1 + np.exp(-z))
    want = -np.mean(y * np.log(s) + (1 - y) * np.log(1 - s))
    assert math.isclose(_loss(z, y), want, rel_tol=1e-12)
    with pytest.raises(ValueError):
        _loss([[1.0]], [[MASK]])
    with pytest.raises(ValueError):
        _loss([[1.0, 2.0]], [[1]])


def test_bce_gradient():
    t = np.array([[1, 0, MASK, 1]])
    assert ad.fd_check(lambda z: T.bce_masked_loss(z, t), [np.array([[0.2, -0.7, 3.0, 1.5]])]) < 1e-8


def _fc(y, n=5):
    return TaskInstance("funccomp", [n] + [0] * n, [y], {"n": n})


def _constant_model(vocab, logit):
    shape = ModelShape("standard", 4, 1, dict(vocab.sizes))
    model = Model.init(shape, np.random.default_rng(0))
    for k in model.params:
        model.params[k][...] = 0.0
    model.params["mlp.b2"][0] = logit
    return model


def test_evaluate_is_mean_of_batch_accuracies():
    data = [_fc(1), _fc(1), _fc(0), _fc(0), _fc(1), _fc(1)]
    vocab = T.Vocab.for_dataset("funccomp", data)
    model = _constant_model(vocab, 1.0)
    # batches of 4 and 2: accuracies 0.5 and 1.0
    assert T.evaluate(model, data, 4, vocab) == pytest.approx(0.75)
    assert T.mean_of_batch_accuracies([1.0, None, 0.5]) == 0.75
    assert T.evaluate(model, [_fc(1)] * 3, 2, vocab) == 1.0


def test_masked_positions_do_not_affect_accuracy():
    logits = np.array([[2.0, -1.0, 5.0]])
    a = T.batch_accuracy(logits, np.array([[1, 0, MASK]]))
    b = T.batch_accuracy(np.array([[2.0, -1.0, -5.0]]), np.array([[1, 0, MASK]]))
    assert a == b == 1.0
    assert T.batch_accuracy(logits, np.full((1, 3), MASK)) is None


def test_evaluate_invariant_to_batch_order():
    data = generate("funccomp", 1, 40, nmin=4, nmax=6)
    vocab = T.Vocab.for_dataset("funccomp", data)
    model = Model.init(ModelShape("strassen", 4, 1, dict(vocab.sizes)), np.random.default_rng(1))
    blocks = [data[i:i + 10] for i in range(0, 40, 10)]
    shuffled = [x for b in (blocks[2], blocks[0], blocks[3], blocks[1]) for x in b]
    assert T.evaluate(model, data, 10, vocab) == pytest.approx(T.evaluate(model, shuffled, 10, vocab), abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_adamw_zero_lr_is_exact_noop(seed):
    rng = np.random.default_rng(seed)
    params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=4)}
    before = {k: v.copy() for k, v in params.items()}
    opt = T.AdamW(lr=0.0)
    for _ in range(3):
        opt.step(params, {k: rng.normal(size=v.shape) for k, v in params.items()})
    assert all(np.array_equal(params[k], before[k]) for k in params)


SMALL = dict(epochs=2, d=4, batch_size=20, seed=3)


def test_lr_zero_training_leaves_parameters_bit_identical():
    data = generate("funccomp", 2, 60, nmin=4, nmax=6)
    cfg = T.TrainConfig(lr=0.0, **SMALL)
    res = T.train_model(cfg, data)
    fresh = Model.init(res.model.shape, np.random.default_rng(cfg.seed))
    for k in fresh.params:
        assert np.array_equal(res.model.params[k], fresh.params[k])
    assert res.metrics[0].train_loss == res.metrics[1].train_loss


def test_training_is_deterministic():
    data = generate("binrel", 2, 30, nmin=3, nmax=4)
    cfg = T.TrainConfig(task="binrel", **SMALL)
    a = [(m.train_loss, m.train_accuracy, m.val_accuracy) for m in T.train(cfg, data)]
    b = [(m.train_loss, m.train_accuracy, m.val_accuracy) for m in T.train(cfg, data)]
    assert a == b


@pytest.mark.parametrize("task,mech,kw", [
    ("funccomp", "strassen", {"nmin": 4, "nmax": 6}),
    ("binrel", "strassen", {"nmin": 3, "nmax": 4}),
    ("quotient", "strassen", {"nmin": 3, "nmax": 4}),
    ("match3", "strassen", {"nmin": 5, "nmax": 7, "modulus": 11}),
    ("binrel", "triangular", {"nmin": 3, "nmax": 4}),
    ("match3", "third_order", {"nmin": 5, "nmax": 7, "modulus": 11}),
])
def test_first_epoch_lowers_training_loss(task, mech, kw):
    data = generate(task, 4, 80, **kw)
    cfg = T.TrainConfig(task=task, mechanism=mech, epochs=1, d=8, batch_size=16, seed=5)
    assert T.train(cfg, data)[0].train_loss <= T.initial_loss(cfg, data)


def test_task_mismatch_is_rejected():
    data = generate("binrel", 0, 5)
    with pytest.raises(ValueError):
        T.train(T.TrainConfig(task="funccomp"), data)
    with pytest.raises(ValueError):
        T.train(T.TrainConfig(task="funccomp", mechanism="triangular"), generate("funccomp", 0, 5))


def test_metrics_and_checkpoint(tmp_path):
    data = generate("funccomp", 2, 40, nmin=4, nmax=5)
    cfg = T.TrainConfig(metrics_path=str(tmp_path / "m.csv"), checkpoint_path=str(tmp_path / "c.bin"), **SMALL)
    res = T.train_model(cfg, data)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == ",".join(T.METRIC_COLUMNS)
    assert len(lines) == 1 + 2 * len(res.metrics)
    model, back = T.load_checkpoint(tmp_path / "c.bin")
    assert back == cfg
    assert all(np.array_equal(model.params[k], res.model.params[k]) for k in res.model.params)
    raw = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        T.load_checkpoint(tmp_path / "t.bin")


def test_config_file_and_full_scale_rows(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("# demo\ntask = binrel\nlr = 0.01\nepochs=3\nstop_at_accuracy = none\n")
    cfg = T.TrainConfig.from_mapping(T.load_config_file(p))
    assert (cfg.task, cfg.lr, cfg.epochs, cfg.stop_at_accuracy) == ("binrel", 0.01, 3, None)
    with pytest.raises(ValueError):
        T.TrainConfig.from_mapping({"colour": "red"})
    full = T.TrainConfig.full_scale("match3")
    assert (full.d, full.heads, full.batch_size, full.dropout) == (128, 2, 2500, 0.4)
    assert T.TrainConfig.full_scale("quotient").batch_size == 2000


def test_majority_baseline():
    assert T.majority_baseline([_fc(1), _fc(1), _fc(0)]) == pytest.approx(2 / 3)
