"""Training loop, evaluation and prediction."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..dataset import (
    ClassScheme,
    ClassWeights,
    Manifest,
    NormStats,
    argmax_decode,
    normalize,
    one_hot,
    stack_pairs,
)
from ..errors import DivergenceError, EmptyInputError
from .checkpoint import Checkpoint
from .loss import DICE_EPS, dice_sums, weighted_dice_loss
from .model import UNet, UNetConfig
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8
    epochs: int = 150
    class_weights: ClassWeights | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_error: float
    saved: bool
    wall_time: float


@dataclass
class TrainResult:
    best: Checkpoint
    history: list  # checkpoints saved on strict validation improvement
    log: list = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_error", "saved_flag", "wall_time"])
            for r in self.log:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_error), int(r.saved), f"{r.wall_time:.3f}"])


def _prepare(images, stats: NormStats, dtype):
    x = normalize(np.asarray(images), stats)
    return x[:, None].astype(dtype)


def _snapshot(model: UNet, opt: Adam, epoch, val_error, stats, weights) -> Checkpoint:
    return Checkpoint(
        params={k: v.copy() for k, v in model.params.items()},
        bn_state={k: v.copy() for k, v in model.state.items()},
        epoch=epoch,
        val_error=float(min(max(val_error, 0.0), 1.0)),
        unet_config=model.config,
        norm_stats=stats,
        class_weights=weights,
        adam_m={k: v.copy() for k, v in opt.m.items()},
        adam_v={k: v.copy() for k, v in opt.v.items()},
        adam_t=opt.t,
    )


def predict_proba(model: UNet, x, batch_size=8):
    out = [model.forward(x[i:i + batch_size], "eval") for i in range(0, len(x), batch_size)]
    return np.concatenate(out)


def dice_error(model: UNet, x, y, weights, batch_size=8) -> float:
    """Weighted soft Dice loss accumulated jointly over the whole set, eval mode."""
    inter = total = 0.0
    for i in range(0, len(x), batch_size):
        p = model.forward(x[i:i + batch_size], "eval")
        t = one_hot(y[i:i + batch_size], model.config.n_classes)
        a, b = dice_sums(p, t, weights)
        inter += a
        total += b
    return 1.0 - (2.0 * inter + DICE_EPS) / (total + DICE_EPS)


def fit(unet_config: UNetConfig, train_config: TrainConfig, train_data, val_data, stats: NormStats, progress=None) -> TrainResult:
    """Train on in-memory arrays.

    ``train_data`` and ``val_data`` are (images, masks) with images as raw integer
    intensities (N, H, W) and masks already remapped to ``unet_config.n_classes``.
    """
    xi, yi = train_data
    if len(xi) == 0 or len(val_data[0]) == 0:
        raise EmptyInputError("training and validation sets must be non-empty")
    if train_config.class_weights is None:
        raise ValueError("train_config.class_weights must be computed before training")
    weights = train_config.class_weights.array
    dtype = np.dtype(unet_config.dtype)
    x_train = _prepare(xi, stats, dtype)
    y_train = np.asarray(yi)
    x_val = _prepare(val_data[0], stats, dtype)
    y_val = np.asarray(val_data[1])

    model = UNet(unet_config)
    opt = Adam(lr=train_config.lr)
    best_err = np.inf
    history, rows = [], []
    t0 = time.perf_counter()
    bs = train_config.batch_size
    for epoch in range(1, train_config.epochs + 1):
        order = np.random.default_rng([train_config.seed, epoch]).permutation(len(x_train))
        losses = []
        for start in range(0, len(order), bs):
            idx = order[start:start + bs]
            probs = model.forward(x_train[idx], "train")
            target = one_hot(y_train[idx], unet_config.n_classes).astype(dtype)
            loss, dprobs = weighted_dice_loss(probs, target, weights)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            grads = model.backward(dprobs)
            opt.step(model.params, grads)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        val_err = dice_error(model, x_val, y_val, weights, bs)
        if not np.isfinite(val_err):
            raise DivergenceError(f"non-finite validation error at epoch {epoch}")
        saved = val_err < best_err
        if saved:
            best_err = val_err
            history.append(_snapshot(model, opt, epoch, val_err, stats, train_config.class_weights))
        rows.append(EpochLog(epoch, train_loss, float(val_err), saved, time.perf_counter() - t0))
        log.info("epoch %d train_loss %.5f val_error %.5f%s", epoch, train_loss, val_err, " *" if saved else "")
        if progress is not None:
            progress(rows[-1])
    return TrainResult(best=history[-1], history=history, log=rows)


def train(unet_config: UNetConfig, train_config: TrainConfig, train_manifest: Manifest, val_manifest: Manifest,
          stats: NormStats, progress=None) -> TrainResult:
    scheme = ClassScheme.for_classes(unet_config.n_classes)
    return fit(unet_config, train_config, stack_pairs(train_manifest, scheme), stack_pairs(val_manifest, scheme),
               stats, progress)


@dataclass(frozen=True)
class EvalResult:
    dice_error_pct: float
    per_class_dice: tuple  # unweighted hard Dice per class, from argmax predictions


def score_probabilities(probs, masks, weights) -> EvalResult:
    """Score predicted probabilities (N, C, H, W) against integer masks (N, H, W)."""
    masks = np.asarray(masks)
    if len(masks) == 0:
        raise EmptyInputError("empty test set")
    n_classes = probs.shape[1]
    target = one_hot(masks, n_classes)
    inter, total = dice_sums(probs, target, weights)
    err = 1.0 - (2.0 * inter + DICE_EPS) / (total + DICE_EPS)
    pred = argmax_decode(probs)
    per_class = []
    for c in range(n_classes):
        a, b = pred == c, masks == c
        denom = int(a.sum()) + int(b.sum())
        per_class.append(1.0 if denom == 0 else 2.0 * int((a & b).sum()) / denom)
    return EvalResult(100.0 * max(err, 0.0), tuple(per_class))


def evaluate(checkpoint: Checkpoint, test, class_weights: ClassWeights | None = None, batch_size=8) -> EvalResult:
    """Dice error in percent over the full test set, eval mode.

    ``test`` is a manifest or an (images, masks) pair with masks remapped to the
    checkpoint's class count.
    """
    cfg = checkpoint.unet_config
    if isinstance(test, Manifest):
        if len(test) == 0:
            raise EmptyInputError("empty test manifest")
        test = stack_pairs(test, ClassScheme.for_classes(cfg.n_classes))
    images, masks = test
    if len(images) == 0:
        raise EmptyInputError("empty test set")
    weights = (class_weights or checkpoint.class_weights).array
    model = checkpoint.model()
    x = _prepare(images, checkpoint.norm_stats, np.dtype(cfg.dtype))
    probs = predict_proba(model, x, batch_size).astype(np.float64)
    return score_probabilities(probs, masks, weights)


def predict(checkpoint: Checkpoint, mr_image) -> np.ndarray:
    """Label map for one raw MR image: channel argmax, ties to the lowest class."""
    model = checkpoint.model()
    x = _prepare(np.asarray(mr_image)[None], checkpoint.norm_stats, np.dtype(checkpoint.unet_config.dtype))
    return argmax_decode(model.forward(x, "eval"))[0]
