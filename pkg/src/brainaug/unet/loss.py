from __future__ import annotations

import numpy as np

from ..errors import ShapeError

DICE_EPS = 1e-5


def dice_sums(probs, target, weights):
    """Weighted overlap and total sums; batch and spatial axes are reduced jointly."""
    w = np.asarray(weights, dtype=np.float64)
    inter = (probs * target).sum(axis=(0, 2, 3))
    total = (probs + target).sum(axis=(0, 2, 3))
    return float(w @ inter), float(w @ total)


def weighted_dice_loss(probs, target, weights, eps=DICE_EPS):
    """Weighted soft Dice loss and its gradient with respect to ``probs``.

    ``L = 1 - (2 sum_c w_c sum_i p_ci g_ci + eps) / (sum_c w_c sum_i (p_ci + g_ci) + eps)``
    """
    if probs.shape != target.shape:
        raise ShapeError(f"probs {probs.shape} and target {target.shape} differ")
    w = np.asarray(weights, dtype=probs.dtype)
    if w.shape != (probs.shape[1],):
        raise ShapeError(f"expected {probs.shape[1]} class weights, got {w.shape}")
    inter, total = dice_sums(probs, target, w)
    num = 2.0 * inter + eps
    den = total + eps
    loss = 1.0 - num / den
    wb = w[None, :, None, None]
    grad = -(2.0 * wb * target * den - num * wb) / (den * den)
    return loss, grad.astype(probs.dtype, copy=False)
