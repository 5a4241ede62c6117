"""From-scratch U-Net with explicit backpropagation, weighted Dice loss and Adam."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .loss import DICE_EPS, weighted_dice_loss
from .model import UNet, UNetConfig, he_normal_init
from .optim import Adam, adam_step
from .train import (
    EvalResult,
    TrainConfig,
    TrainResult,
    evaluate,
    fit,
    predict,
    score_probabilities,
    train,
)

__all__ = [
    "DICE_EPS",
    "Adam",
    "Checkpoint",
    "EvalResult",
    "TrainConfig",
    "TrainResult",
    "UNet",
    "UNetConfig",
    "adam_step",
    "evaluate",
    "fit",
    "he_normal_init",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "score_probabilities",
    "train",
    "weighted_dice_loss",
]
