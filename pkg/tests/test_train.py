import csv

import numpy as np
import pytest

from brainaug import dataset as ds
from brainaug import synthsrc
from brainaug.errors import DivergenceError, EmptyInputError
from brainaug.unet import TrainConfig, UNet, UNetConfig, evaluate, fit, predict, score_probabilities
from brainaug.unet.checkpoint import Checkpoint
from brainaug.unet.train import predict_proba


def _data(n, seed, size=16, classes=2):
    p = synthsrc.PhantomParams(image_size=(size, size), tumor_radius=(0.15, 0.25))
    scheme = ds.ClassScheme.for_classes(classes)
    pairs = [synthsrc.phantom_pair(p, seed, i) for i in range(n)]
    return np.stack([im for _, im in pairs]), np.stack([ds.remap_classes(m, scheme) for m, _ in pairs])


@pytest.fixture(scope="module")
def small_run():
    tr, va = _data(8, 1), _data(4, 2)
    stats = ds.compute_norm_stats(list(tr[0]))
    w = ds.compute_class_weights(list(tr[1]), 2)
    cfg = UNetConfig(n_levels=1, base_filters=4, n_classes=2, input_size=(16, 16), seed=3)
    tcfg = TrainConfig(lr=3e-3, batch_size=4, epochs=6, class_weights=w, seed=5)
    return cfg, tcfg, tr, va, stats, fit(cfg, tcfg, tr, va, stats)


def test_best_is_minimum_of_log(small_run):
    *_, res = small_run
    errs = [r.val_error for r in res.log]
    assert res.best.val_error == pytest.approx(min(errs))
    assert res.best.epoch == 1 + int(np.argmin(errs))
    saved = [r.epoch for r in res.log if r.saved]
    assert saved == [c.epoch for c in res.history]
    # strict improvement only
    vals = [c.val_error for c in res.history]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_training_deterministic(small_run):
    cfg, tcfg, tr, va, stats, res = small_run
    again = fit(cfg, tcfg, tr, va, stats)
    assert [r.train_loss for r in again.log] == [r.train_loss for r in res.log]
    assert all(np.array_equal(again.best.params[k], res.best.params[k]) for k in res.best.params)


def test_training_log_csv(tmp_path, small_run):
    *_, res = small_run
    res.write_log(tmp_path / "log.csv")
    rows = list(csv.DictReader(open(tmp_path / "log.csv")))
    assert list(rows[0]) == ["epoch", "train_loss", "val_error", "saved_flag", "wall_time"]
    assert len(rows) == 6


def test_evaluate_repeatable(small_run):
    *_, va, _, res = small_run
    a, b = evaluate(res.best, va), evaluate(res.best, va)
    assert a == b and 0 <= a.dice_error_pct <= 100
    assert len(a.per_class_dice) == 2


def test_perfect_predictor_scores_zero():
    masks = np.random.default_rng(0).integers(0, 4, (3, 8, 8))
    res = score_probabilities(ds.one_hot(masks, 4), masks, np.full(4, 0.25))
    assert res.dice_error_pct == pytest.approx(0, abs=1e-9)
    assert res.per_class_dice == pytest.approx((1, 1, 1, 1))
    with pytest.raises(EmptyInputError):
        score_probabilities(np.zeros((0, 2, 4, 4)), np.zeros((0, 4, 4), int), np.full(2, 0.5))


def test_predict_tie_rule_and_idempotence():
    cfg = UNetConfig(n_levels=1, base_filters=1, n_classes=2, input_size=(8, 8), dtype="float64")
    net = UNet(cfg)
    # zero weights everywhere: uniform probabilities, ties go to class 0
    params = {k: np.zeros_like(v) for k, v in net.params.items()}
    ck = Checkpoint(params, net.state, 1, 0.0, cfg, ds.NormStats(1.0, 0.0), ds.ClassWeights((0.5, 0.5)))
    assert not predict(ck, np.zeros((8, 8), np.uint16)).any()
    probs = np.zeros((1, 4, 3, 3))
    probs[:, 3] = 1
    assert (ds.argmax_decode(probs) == 3).all()
    m = ds.argmax_decode(np.random.default_rng(1).random((4, 5, 5)))
    assert np.array_equal(ds.argmax_decode(ds.one_hot(m, 4)), m)


def test_divergence_detected():
    tr = _data(2, 1, size=8)
    stats = ds.NormStats(1e-300, 0.0)  # overflows the input scaling
    w = ds.compute_class_weights(list(tr[1]), 2)
    cfg = UNetConfig(n_levels=1, base_filters=2, n_classes=2, input_size=(8, 8))
    with np.errstate(all="ignore"), pytest.raises(DivergenceError):
        fit(cfg, TrainConfig(lr=1e-3, batch_size=2, epochs=1, class_weights=w), tr, tr, stats)


def test_predict_proba_batches(small_run):
    *_, va, stats, res = small_run
    x = (va[0][:, None] / stats.scale_max - stats.mean_after_scale).astype(np.float32)
    model = res.best.model()
    assert np.allclose(predict_proba(model, x, 1), predict_proba(model, x, 3), atol=1e-6)


def test_per_class_dice_permutation_equivariant():
    r = np.random.default_rng(4)
    masks = r.integers(0, 4, (2, 6, 6))
    probs = r.random((2, 4, 6, 6))
    probs /= probs.sum(axis=1, keepdims=True)
    w = np.array([0.1, 0.2, 0.3, 0.4])
    perm = np.array([2, 0, 3, 1])  # class k becomes perm[k]
    inv = np.argsort(perm)
    a = score_probabilities(probs, masks, w)
    b = score_probabilities(probs[:, inv], perm[masks], w[inv])
    assert np.allclose(np.array(b.per_class_dice)[perm], a.per_class_dice)
    assert b.dice_error_pct == pytest.approx(a.dice_error_pct, rel=1e-12)
