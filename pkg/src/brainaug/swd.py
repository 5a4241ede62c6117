"""Sliced Wasserstein distance between image sets, on Laplacian-pyramid patches.

Each image is decomposed into a Laplacian pyramid; at every level random 7x7
neighbourhoods are sampled, standardized per dimension over the set, and the
two descriptor clouds are compared by averaging 1D Wasserstein-1 distances
along random unit directions. Scores are in raw descriptor units (no x1e3 scaling).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import EmptyInputError, ShapeError

_TAPS = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
DESC_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class SWDConfig:
    n_levels: int = 3
    patch_size: int = 7
    patches_per_image: int = 128
    n_projections: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.patch_size % 2 != 1:
            raise ValueError("patch_size must be odd")
        if min(self.n_levels, self.patch_size, self.patches_per_image, self.n_projections) < 1:
            raise ValueError("SWDConfig counts must be positive")


@dataclass(frozen=True)
class DescriptorSet:
    level: int
    descriptors: np.ndarray

    def __post_init__(self):
        if self.descriptors.ndim != 2 or self.descriptors.shape[0] == 0:
            raise ShapeError("descriptor matrix must be (n > 0, d)")


def _blur(img, taps):
    out = correlate1d(img, taps, axis=-2, mode="mirror")
    return correlate1d(out, taps, axis=-1, mode="mirror")


def pyr_down(img):
    return _blur(img, _TAPS)[..., ::2, ::2]


def pyr_up(img):
    h, w = img.shape[-2:]
    up = np.zeros(img.shape[:-2] + (2 * h, 2 * w), dtype=img.dtype)
    up[..., ::2, ::2] = img
    return _blur(up, 2.0 * _TAPS)


def laplacian_pyramid(image, n_levels: int) -> list:
    """Band-pass levels finest first; the last entry is the low-pass residual."""
    g = np.asarray(image, dtype=np.float64)
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    f = 2 ** (n_levels - 1)
    if g.shape[-1] % f or g.shape[-2] % f:
        raise ShapeError(f"image dims {g.shape[-2:]} not divisible by {f}")
    bands = []
    for _ in range(n_levels - 1):
        low = pyr_down(g)
        bands.append(g - pyr_up(low))
        g = low
    bands.append(g)
    return bands


def reconstruct(bands) -> np.ndarray:
    img = bands[-1]
    for band in bands[-2::-1]:
        img = pyr_up(img) + band
    return img


def extract_descriptors(band_images, config: SWDConfig, seed=None, level: int = 0) -> DescriptorSet:
    """Sample ``patches_per_image`` neighbourhoods per image and standardize each dimension."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng([seed, level])
    p = config.patch_size
    r = p // 2
    out = []
    for img in band_images:
        img = np.asarray(img, dtype=np.float64)
        h, w = img.shape
        if h < p or w < p:
            raise ShapeError(f"band image {img.shape} smaller than {p}x{p} patch")
        ys = rng.integers(r, h - r, size=config.patches_per_image)
        xs = rng.integers(r, w - r, size=config.patches_per_image)
        win = np.lib.stride_tricks.sliding_window_view(img, (p, p))
        out.append(win[ys - r, xs - r].reshape(config.patches_per_image, p * p))
    if not out:
        raise EmptyInputError("no images to describe")
    desc = np.concatenate(out)
    desc = desc - desc.mean(axis=0)
    desc = desc / np.maximum(desc.std(axis=0), DESC_STD_FLOOR)
    return DescriptorSet(level, desc)


def random_directions(dim: int, n_projections: int, seed) -> np.ndarray:
    """(dim, n_projections) matrix of unit-norm columns."""
    d = np.random.default_rng(seed).standard_normal((dim, n_projections))
    return d / np.linalg.norm(d, axis=0, keepdims=True)


def sliced_wasserstein(a, b, n_projections: int = 512, seed=0, directions=None) -> float:
    """Mean over random directions of the 1D Wasserstein-1 distance of the projected sets.

    Unequal sets are truncated to the common prefix length.
    """
    a = a.descriptors if isinstance(a, DescriptorSet) else np.asarray(a, dtype=np.float64)
    b = b.descriptors if isinstance(b, DescriptorSet) else np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"descriptor dimensions differ: {a.shape} vs {b.shape}")
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    if directions is None:
        directions = random_directions(a.shape[1], n_projections, seed)
    pa = np.sort(a @ directions, axis=0)
    pb = np.sort(b @ directions, axis=0)
    per_dir = np.abs(pa - pb).mean(axis=0)
    return float(per_dir.mean())


def swd_score(set_a, set_b, config: SWDConfig = SWDConfig(), seed_b=None):
    """Per-level SWD and their average.

    Both sets use ``config.seed`` for patch sampling unless ``seed_b`` is given
    for the second set. Returns ``(per_level, average)``.
    """
    set_a = [np.asarray(x, dtype=np.float64) for x in set_a]
    set_b = [np.asarray(x, dtype=np.float64) for x in set_b]
    if not set_a or not set_b:
        raise EmptyInputError("both image sets must be non-empty")
    shapes = {x.shape for x in set_a} | {x.shape for x in set_b}
    if len(shapes) != 1:
        raise ShapeError(f"all images must share one shape, got {sorted(shapes)}")
    pyr_a = [laplacian_pyramid(x, config.n_levels) for x in set_a]
    pyr_b = [laplacian_pyramid(x, config.n_levels) for x in set_b]
    seed_b = config.seed if seed_b is None else seed_b
    per_level = []
    for lvl in range(config.n_levels):
        da = extract_descriptors([p[lvl] for p in pyr_a], config, config.seed, lvl)
        db = extract_descriptors([p[lvl] for p in pyr_b], config, seed_b, lvl)
        per_level.append(sliced_wasserstein(da, db, config.n_projections, seed=[config.seed, 7919, lvl]))
    return per_level, float(np.mean(per_level))


def checkpoint_scores(candidates, reference_set, config: SWDConfig = SWDConfig()) -> dict:
    """Average SWD of every (id, image_set) candidate against the reference set."""
    return {cid: swd_score(images, reference_set, config)[1] for cid, images in candidates}


def select_checkpoint(candidates, reference_set, config: SWDConfig = SWDConfig()):
    """The candidate id with the lowest average SWD; ties go to the smallest id."""
    candidates = list(candidates)
    if not candidates:
        raise EmptyInputError("no candidate checkpoints")
    scores = checkpoint_scores(candidates, reference_set, config)
    return min(sorted(scores), key=lambda cid: scores[cid])
