"""Z-score quality control for synthetic segmentation masks.

Every synthetic mask is standardized pixelwise against the per-location mean
and standard deviation of a real reference set; the Euclidean norm of the
standardized image measures how atypical it is. Masks whose norm exceeds the
threshold are discarded. Label values are standardized directly (no one-hot).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeError, SizeError

DEFAULT_THRESHOLD = 500.0
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class PixelStats:
    mean_map: np.ndarray
    std_map: np.ndarray
    n_ref: int


@dataclass
class QCReport:
    kept: list
    discarded: list  # (id, norm)
    threshold: float
    discarded_fraction: float
    norms: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> str:
        doc = {
            "threshold": self.threshold,
            "n_input": len(self.kept) + len(self.discarded),
            "n_kept": len(self.kept),
            "discarded_fraction": self.discarded_fraction,
            "kept": list(self.kept),
            "discarded": [{"id": i, "norm": n} for i, n in self.discarded],
        }
        return json.dumps(doc, indent=1) + "\n"


def batch_pixel_stats(real_masks: Sequence) -> PixelStats:
    """Per-location mean and population standard deviation over the batch axis.

    Integer masks are accumulated exactly, so reference order cannot change the result.
    """
    if len(real_masks) < 2:
        raise SizeError("need at least two reference masks")
    shape = np.shape(real_masks[0])
    s1 = np.zeros(shape, dtype=np.int64)
    s2 = np.zeros(shape, dtype=np.int64)
    for m in real_masks:
        m = np.asarray(m)
        if m.shape != shape:
            raise ShapeError(f"reference mask shape {m.shape} differs from {shape}")
        if m.dtype.kind not in "iu":
            raise TypeError("reference masks must be integer label maps")
        m = m.astype(np.int64)
        s1 += m
        s2 += m * m
    n = len(real_masks)
    mean = s1 / n
    # n^2 * var = n * s2 - s1^2, exact in integers
    var = (n * s2 - s1 * s1) / (n * n)
    return PixelStats(mean, np.sqrt(var), n)


def zscore_map(mask, stats: PixelStats, eps: float = STD_FLOOR) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != stats.mean_map.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match reference {stats.mean_map.shape}")
    return (mask - stats.mean_map) / np.maximum(stats.std_map, eps)


def zscore_norm(mask, stats: PixelStats, eps: float = STD_FLOOR) -> float:
    return float(np.linalg.norm(zscore_map(mask, stats, eps).ravel()))


def filter_dataset(synth_masks, stats: PixelStats, threshold=DEFAULT_THRESHOLD, ids=None) -> QCReport:
    """Keep a mask iff its standardized norm is <= ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    synth_masks = list(synth_masks)
    ids = list(range(len(synth_masks))) if ids is None else list(ids)
    if len(ids) != len(synth_masks):
        raise SizeError("ids and masks differ in length")
    kept, discarded, norms = [], [], {}
    for i, m in zip(ids, synth_masks):
        n = zscore_norm(m, stats)
        norms[i] = n
        if n <= threshold:
            kept.append(i)
        else:
            discarded.append((i, n))
    frac = len(discarded) / len(synth_masks) if synth_masks else 0.0
    return QCReport(kept, discarded, float(threshold), frac, norms)
