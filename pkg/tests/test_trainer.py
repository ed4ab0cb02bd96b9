import json

import numpy as np
import pytest

from conftest import tiny_config
from adgsyn.amp import LossScaler
from adgsyn.config import RunConfig, TrainConfig
from adgsyn.data import ExpressionScaler, GraphCache, make_batch, make_folds
from adgsyn.model import ADGSyn
from adgsyn.synthetic import toy_triplets
from adgsyn.tensor import AMP_POLICY, FULL_PRECISION, Parameter
from adgsyn.trainer import Adam, fit, fold_seeds, lr_at, train_step


def _setup(n=16, seed=0):
    triplets, raw = toy_triplets(n=n, seed=seed, n_genes=16)
    profiles = ExpressionScaler().fit(raw).transform(raw)
    return triplets, raw, profiles


def test_lr_step_decay():
    assert lr_at(0, 1.0) == 1.0 and lr_at(99, 1.0) == 1.0
    assert lr_at(100, 1.0) == pytest.approx(0.7)
    assert lr_at(250, 1.0) == pytest.approx(0.49)


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([1.0, -1.0]))
    opt = Adam([p], lr=0.1)
    p.grad = np.float32([3.0, -0.5])
    opt.step()
    np.testing.assert_allclose(p.data, [0.9, -0.9], rtol=1e-5)
    np.testing.assert_array_equal(p.shadow, p.data.astype(np.float16))


def test_overflow_step_leaves_parameters_unchanged():
    triplets, _, profiles = _setup()
    model = ADGSyn(tiny_config(), seed=0)
    before = model.state_dict()
    opt = Adam(model.parameters())
    scaler = LossScaler(scale=2.0 ** 40)  # first half-precision backward overflows
    res = train_step(model, make_batch(triplets, GraphCache(), profiles), opt, scaler, AMP_POLICY)
    assert not res.grads_valid
    assert scaler.scale == 2.0 ** 39
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_full_precision_step_is_deterministic():
    triplets, _, profiles = _setup()
    states = []
    for _ in range(2):
        model = ADGSyn(tiny_config(), seed=0)
        opt = Adam(model.parameters())
        batch = make_batch(triplets, GraphCache(), profiles)
        for _ in range(3):
            train_step(model, batch, opt, LossScaler(enabled=False), FULL_PRECISION)
        states.append(model.state_dict())
    for k in states[0]:
        np.testing.assert_array_equal(states[0][k], states[1][k])


def test_loss_decreases_on_repeated_batch():
    triplets, _, profiles = _setup()
    model = ADGSyn(tiny_config(dropout=0.0), seed=0)
    opt = Adam(model.parameters(), lr=1e-3)
    batch = make_batch(triplets, GraphCache(), profiles)
    scaler = LossScaler()
    results = [train_step(model, batch, opt, scaler, AMP_POLICY) for _ in range(15)]
    # the first step overflows at 2^16 and is skipped
    assert not results[0].grads_valid and all(r.grads_valid for r in results[1:])
    assert results[-1].loss < 0.5 * results[0].loss


def test_fold_seeds_differ_by_fold():
    a, _ = fold_seeds(0, 0)
    b, _ = fold_seeds(0, 1)
    assert a != b and fold_seeds(0, 0)[0] == a


def test_fit_writes_run_directory(tmp_path):
    triplets, raw, _ = _setup(n=30)
    run = RunConfig(model=tiny_config(), train=TrainConfig(epochs=3, folds=2, batch_size=8)).validate()
    result = fit(run, triplets, raw, out_dir=tmp_path)
    assert len(result.folds) == 2
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["partial"] is False and len(metrics["folds"]) == 2
    timings = json.loads((tmp_path / "timings.json").read_text())
    assert len(timings["folds"][0]["times"]) == 3
    assert (tmp_path / "fold1.ckpt").exists() and (tmp_path / "config.json").exists()
    # test indices never appear in training
    split = make_folds(triplets, 0, 5)
    tr, _, te = split.rotation(0)
    assert result.folds[0].label_counts["test"]["total"] == len(te)
    assert not set(tr) & set(te)


def test_fit_in_parallel_matches_serial(tmp_path):
    triplets, raw, _ = _setup(n=30)
    cfg = dict(epochs=2, folds=2, batch_size=8, amp=False)
    serial = fit(RunConfig(model=tiny_config(), train=TrainConfig(**cfg)).validate(), triplets, raw)
    parallel = fit(RunConfig(model=tiny_config(), train=TrainConfig(jobs=2, **cfg)).validate(), triplets, raw)
    assert [f.test.as_dict() for f in serial.folds] == [f.test.as_dict() for f in parallel.folds]
