"""Dataset manifests, splitting, class remapping, normalization and mixing.

A :class:`Manifest` is an ordered list of (MR image, mask) PNG pairs. Relative
paths inside a manifest are resolved against ``Manifest.root`` (the directory
the manifest was loaded from), so run directories can be moved or duplicated.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateStatsError, InvalidLabelError, SizeError
from .volio import read_png

log = logging.getLogger(__name__)

REAL = "real"
SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Entry:
    mr: str | None
    mask: str
    source: str
    index: int | None
    provenance: str = REAL


@dataclass
class Manifest:
    entries: list = field(default_factory=list)
    split_tag: str = "all"
    seed: int | None = None
    root: Path | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def rebase(self, new_root) -> "Manifest":
        """Rewrite relative paths so they resolve identically from ``new_root``."""
        new_root = Path(new_root)

        def rel(p):
            if p is None:
                return None
            return os.path.relpath(os.path.abspath(self.resolve(p)), os.path.abspath(new_root))

        entries = [replace(e, mr=rel(e.mr), mask=rel(e.mask)) for e in self.entries]
        return replace(self, entries=entries, root=new_root)

    def to_json(self) -> str:
        doc = {
            "split_tag": self.split_tag,
            "seed": self.seed,
            "entries": [asdict(e) for e in self.entries],
        }
        return json.dumps(doc, indent=1) + "\n"

    def save(self, path) -> None:
        path = Path(path)
        Path(path).write_text(self.rebase(path.parent).to_json())

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        entries = [Entry(**e) for e in doc["entries"]]
        return cls(entries, doc.get("split_tag", "all"), doc.get("seed"), path.parent)

    def derive(self, entries, **kw) -> "Manifest":
        return replace(self, entries=list(entries), **kw)


def _exact(x) -> Fraction:
    # decimal literals such as 0.2 or 0.1 must behave exactly under floor/ceil
    return Fraction(x).limit_denominator(10**9)


# ---------------------------------------------------------------- splitting


def split(slices, ratios=(0.8, 0.1, 0.1), seed=0, by_volume=False):
    """Shuffle and partition into (train, val, test) manifests.

    Sizes are ``floor(n * ratio)`` for val and test, the remainder goes to train.
    With ``by_volume`` whole source volumes are assigned instead of slices; this
    tends to overfit badly when volumes come from different scanners.
    """
    entries = list(slices.entries if isinstance(slices, Manifest) else slices)
    root = slices.root if isinstance(slices, Manifest) else None
    if not entries:
        raise SizeError("cannot split an empty slice list")
    fr = [_exact(r) for r in ratios]
    if len(fr) != 3 or sum(fr) != 1 or any(r < 0 for r in fr):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)

    if by_volume:
        log.warning("splitting by volume: expect strong overfitting if volumes differ in scanner")
        sources = sorted({e.source for e in entries})
        order = [sources[i] for i in rng.permutation(len(sources))]
        n_val, n_test = (math.floor(len(order) * r) for r in fr[1:])
        n_train = len(order) - n_val - n_test
        groups = (set(order[:n_train]), set(order[n_train:n_train + n_val]), set(order[n_train + n_val:]))
        parts = [[e for e in entries if e.source in g] for g in groups]
        parts = [[p[i] for i in rng.permutation(len(p))] for p in parts]
    else:
        shuffled = [entries[i] for i in rng.permutation(len(entries))]
        n = len(shuffled)
        n_val, n_test = (math.floor(n * r) for r in fr[1:])
        n_train = n - n_val - n_test
        parts = [shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]]

    return tuple(
        Manifest(p, tag, seed, root) for p, tag in zip(parts, ("train", "val", "test"))
    )


def take_fraction(manifest: Manifest, fraction) -> Manifest:
    """The first ``ceil(n * fraction)`` entries, order preserved."""
    f = _exact(fraction)
    if not 0 < f <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    k = math.ceil(len(manifest) * f)
    return manifest.derive(manifest.entries[:k])


# ---------------------------------------------------------------- classes

# label semantics: 0 BG, 1 NCR/NET, 2 ED, 3 ET, 4 WM, 5 GM, 6 CSF
N_SOURCE_CLASSES = 7
_MAPPINGS = {
    7: (0, 1, 2, 3, 4, 5, 6),
    4: (0, 1, 2, 3, 0, 0, 0),
    2: (0, 1, 1, 1, 0, 0, 0),
}


@dataclass(frozen=True)
class ClassScheme:
    n_classes: int
    mapping: tuple

    def __post_init__(self):
        if len(self.mapping) != N_SOURCE_CLASSES or self.mapping[0] != 0:
            raise ValueError("mapping must cover labels 0..6 and send 0 to 0")
        if max(self.mapping) >= self.n_classes or min(self.mapping) < 0:
            raise ValueError("mapping image outside 0..n_classes-1")

    @classmethod
    def for_classes(cls, n_classes: int) -> "ClassScheme":
        if n_classes not in _MAPPINGS:
            raise ValueError(f"n_classes must be one of 7, 4, 2; got {n_classes}")
        return cls(n_classes, _MAPPINGS[n_classes])


def remap_classes(mask, scheme: ClassScheme) -> np.ndarray:
    """Apply ``scheme.mapping`` pixelwise. 7->4 drops tissue classes, ->2 merges tumour classes."""
    mask = np.asarray(mask)
    if mask.size and (mask.min() < 0 or mask.max() >= N_SOURCE_CLASSES):
        raise InvalidLabelError(f"mask values must lie in 0..6, got [{mask.min()}, {mask.max()}]")
    lut = np.asarray(scheme.mapping, dtype=np.uint8)
    return lut[mask]


def filter_empty(masks: Sequence):
    """Drop all-zero masks; returns (kept, discarded_fraction)."""
    masks = list(masks)
    kept = [m for m in masks if np.any(np.asarray(m))]
    frac = (len(masks) - len(kept)) / len(masks) if masks else 0.0
    return kept, frac


def one_hot(mask, n_classes: int) -> np.ndarray:
    """(H, W) -> (C, H, W), or (N, H, W) -> (N, C, H, W)."""
    mask = np.asarray(mask)
    if mask.size and (mask.min() < 0 or mask.max() >= n_classes):
        raise InvalidLabelError(f"labels must lie in 0..{n_classes - 1}")
    classes = np.arange(n_classes).reshape((n_classes,) + (1,) * 2)
    if mask.ndim == 2:
        return (mask[None] == classes).astype(np.float64)
    return (mask[:, None] == classes[None]).astype(np.float64)


def argmax_decode(probs: np.ndarray) -> np.ndarray:
    """Channel argmax of (C, H, W) or (N, C, H, W); ties go to the lowest class."""
    axis = 0 if probs.ndim == 3 else 1
    return np.argmax(probs, axis=axis).astype(np.uint8)


# ---------------------------------------------------------------- statistics


@dataclass(frozen=True)
class NormStats:
    scale_max: float
    mean_after_scale: float

    def __post_init__(self):
        if not self.scale_max > 0:
            raise DegenerateStatsError("scale_max must be positive")


@dataclass(frozen=True)
class ClassWeights:
    w: tuple

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("class weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"class weights must sum to 1, got {w.sum()}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.w, dtype=np.float64)


def load_mr_images(manifest: Manifest) -> list:
    return [read_png(manifest.resolve(e.mr)).pixels for e in manifest.entries]


def load_masks(manifest: Manifest, scheme: ClassScheme | None = None) -> list:
    out = []
    for e in manifest.entries:
        m = read_png(manifest.resolve(e.mask)).pixels
        out.append(remap_classes(m, scheme) if scheme is not None else m)
    return out


def compute_norm_stats(images) -> NormStats:
    """Training-set max and mean-after-scaling.

    ``images`` is a manifest or an iterable of integer arrays. Sums are taken in
    exact integer arithmetic, so the result does not depend on image order.
    """
    if isinstance(images, Manifest):
        images = load_mr_images(images)
    total = 0
    count = 0
    top = None
    for img in images:
        img = np.asarray(img)
        if img.dtype.kind not in "iu":
            raise TypeError("compute_norm_stats expects integer images")
        total += int(img.sum(dtype=np.int64))
        count += img.size
        m = int(img.max()) if img.size else 0
        top = m if top is None else max(top, m)
    if count == 0:
        raise DegenerateStatsError("no training pixels")
    if top <= 0:
        raise DegenerateStatsError("all training pixels are zero")
    return NormStats(float(top), total / (count * top))


def normalize(mr_image, stats: NormStats) -> np.ndarray:
    return np.asarray(mr_image, dtype=np.float64) / stats.scale_max - stats.mean_after_scale


def compute_class_weights(masks, n_classes: int, eps: float = 1.0) -> ClassWeights:
    """Inverse pixel-frequency weights ``1 / (count_c + eps)``, normalized to sum 1.

    ``masks`` is a manifest (remapped to ``n_classes``) or an iterable of
    already-remapped masks.
    """
    if isinstance(masks, Manifest):
        masks = load_masks(masks, ClassScheme.for_classes(n_classes))
    counts = np.zeros(n_classes, dtype=np.int64)
    for m in masks:
        m = np.asarray(m)
        if m.size and m.max() >= n_classes:
            raise InvalidLabelError(f"mask holds label {m.max()} but n_classes={n_classes}")
        counts += np.bincount(m.ravel(), minlength=n_classes)
    inv = 1.0 / (counts + eps)
    return ClassWeights(tuple(float(v) for v in inv / inv.sum()))


# ---------------------------------------------------------------- mixing


def mix(real: Manifest, synth: Manifest, n_real: int, n_synth: int, seed=0) -> Manifest:
    """First ``n_real`` real plus first ``n_synth`` synthetic entries, shuffled."""
    if n_real < 0 or n_synth < 0:
        raise SizeError("counts must be non-negative")
    if n_real > len(real):
        raise SizeError(f"asked for {n_real} real entries, only {len(real)} available")
    if n_synth > len(synth):
        raise SizeError(f"asked for {n_synth} synthetic entries, only {len(synth)} available")
    root = real.root if real.root is not None else synth.root
    if root is not None:
        real, synth = real.rebase(root), synth.rebase(root)
    picked = [replace(e, provenance=REAL) for e in real.entries[:n_real]]
    picked += [replace(e, provenance=SYNTHETIC) for e in synth.entries[:n_synth]]
    rng = np.random.default_rng(seed)
    picked = [picked[i] for i in rng.permutation(len(picked))]
    return Manifest(picked, "train", seed, root)


def stack_pairs(manifest: Manifest, scheme: ClassScheme):
    """Load a manifest into (images uint16 (N,H,W), masks uint8 (N,H,W))."""
    imgs = np.stack(load_mr_images(manifest))
    masks = np.stack(load_masks(manifest, scheme))
    if imgs.shape != masks.shape:
        raise SizeError(f"image/mask shape mismatch: {imgs.shape} vs {masks.shape}")
    return imgs, masks


def save_sidecar(path, obj) -> None:
    Path(path).write_text(json.dumps(asdict(obj), indent=1) + "\n")


def load_norm_stats(path) -> NormStats:
    return NormStats(**json.loads(Path(path).read_text()))


def load_class_weights(path) -> ClassWeights:
    return ClassWeights(tuple(json.loads(Path(path).read_text())["w"]))
