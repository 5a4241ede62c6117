"""Synthetic (label, image) sources.

The mask source and the label-to-image renderer are deliberately separate so
externally generated masks (e.g. from a trained noise-to-image GAN) can be
ingested and QC'd exactly like procedural phantoms.

Phantom anatomy: an elliptical head with concentric CSF (6), grey matter (5)
and white matter (4) regions, plus 0..k tumour blobs, each an edema shell (2)
around an enhancing ring (3) around a necrotic core (1). Background is 0.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dataset import REAL, SYNTHETIC, Entry, Manifest
from .errors import RangeError, ValidationError
from .volio import MASK8, MR16, Slice2D, Volume, read_png, slice_filename, write_png

BG, NCR, ED, ET, WM, GM, CSF = range(7)


# ---------------------------------------------------------------- dynamic range


@dataclass(frozen=True)
class DynamicRange:
    lo: float = 0.0
    hi: float = 6.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("dynamic range needs hi > lo")


def range_encode(mask, rng: DynamicRange = DynamicRange()) -> np.ndarray:
    """Map label values in [lo, hi] affinely onto [-1, 1]."""
    v = np.asarray(mask, dtype=np.float64)
    if v.size and (v.min() < rng.lo or v.max() > rng.hi):
        raise RangeError(f"values [{v.min()}, {v.max()}] outside [{rng.lo}, {rng.hi}]")
    return 2.0 * (v - rng.lo) / (rng.hi - rng.lo) - 1.0


def range_decode(t, rng: DynamicRange = DynamicRange()) -> np.ndarray:
    """Inverse of :func:`range_encode`, rounded to the nearest label and clamped."""
    v = (np.asarray(t, dtype=np.float64) + 1.0) * (rng.hi - rng.lo) / 2.0 + rng.lo
    return np.clip(np.round(v), rng.lo, rng.hi).astype(np.int64)


# ---------------------------------------------------------------- phantoms


@dataclass(frozen=True)
class PhantomParams:
    image_size: tuple = (64, 64)
    class_count: int = 7
    center_jitter: float = 0.04  # fraction of image size
    head_axes: tuple = ((0.34, 0.44), (0.30, 0.42))  # semi-axes, fraction of size
    head_rotation: tuple = (-0.35, 0.35)  # radians
    gm_boundary: tuple = (0.80, 0.88)  # normalized radius where CSF gives way to GM
    wm_boundary: tuple = (0.55, 0.68)
    tumor_count: tuple = (0, 3)  # inclusive
    tumor_radius: tuple = (0.05, 0.12)  # fraction of min(image_size)
    tumor_aspect: tuple = (0.7, 1.0)
    tumor_max_offset: float = 0.55  # normalized head radius for blob centres
    enhancing_frac: float = 0.65
    core_frac: float = 0.35
    intensity_mean: tuple = (0.0, 380.0, 760.0, 1400.0, 1000.0, 600.0, 220.0)
    intensity_std: tuple = (8.0, 70.0, 70.0, 90.0, 60.0, 60.0, 50.0)
    bias_amplitude: float = 0.08
    empty_prob: float = 0.0

    def __post_init__(self):
        # JSON and TOML hand back lists; store tuples so equality and hashing work
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple)):
                object.__setattr__(self, f.name, tuple(tuple(r) if isinstance(r, (list, tuple)) else r for r in v))
        problems = []
        ranges = [("head_rotation", self.head_rotation), ("gm_boundary", self.gm_boundary),
                  ("wm_boundary", self.wm_boundary), ("tumor_count", self.tumor_count),
                  ("tumor_radius", self.tumor_radius), ("tumor_aspect", self.tumor_aspect)]
        ranges += [(f"head_axes[{i}]", r) for i, r in enumerate(self.head_axes)]
        for name, (lo, hi) in ranges:
            if not lo <= hi:
                problems.append(f"{name}: lower bound exceeds upper bound")
        if self.class_count != 7:
            problems.append("phantoms are generated with the 7-class label set; remap afterwards")
        if len(self.intensity_mean) != 7 or len(self.intensity_std) != 7:
            problems.append("intensity_mean and intensity_std need one entry per class")
        if len(set(self.intensity_mean)) != 7:
            problems.append("class intensity means must be distinct")
        if any(s < 0 for s in self.intensity_std):
            problems.append("intensity_std must be non-negative")
        if not self.wm_boundary[1] < self.gm_boundary[0] <= 1:
            problems.append("need wm_boundary < gm_boundary <= 1")
        if not 0 <= self.empty_prob <= 1:
            problems.append("empty_prob must be in [0, 1]")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown phantom parameters: {sorted(unknown)}")
        return cls(**d)

    def perturbed(self, mean_scale=1.06, std_scale=1.3, bias_amplitude=None):
        """A renderer variant with shifted contrast and noise, standing in for an imperfect generator."""
        return replace(
            self,
            intensity_mean=tuple(m * mean_scale for m in self.intensity_mean),
            intensity_std=tuple(s * std_scale for s in self.intensity_std),
            bias_amplitude=self.bias_amplitude if bias_amplitude is None else bias_amplitude,
        )


def _u(rng, bounds):
    return float(rng.uniform(bounds[0], bounds[1]))


def _sample_geometry(params: PhantomParams, rng) -> dict:
    h, w = params.image_size
    geom = {
        "cy": (h - 1) / 2 + rng.uniform(-1, 1) * params.center_jitter * h,
        "cx": (w - 1) / 2 + rng.uniform(-1, 1) * params.center_jitter * w,
        "ay": _u(rng, params.head_axes[0]) * h,
        "ax": _u(rng, params.head_axes[1]) * w,
        "angle": _u(rng, params.head_rotation),
        "gm": _u(rng, params.gm_boundary),
        "wm": _u(rng, params.wm_boundary),
    }
    lo, hi = params.tumor_count
    tumors = []
    for _ in range(int(rng.integers(lo, hi + 1))):
        rad = params.tumor_max_offset * np.sqrt(rng.uniform())
        theta = rng.uniform(0, 2 * np.pi)
        tumors.append({
            "u": rad * np.cos(theta),  # position in normalized head coordinates
            "v": rad * np.sin(theta),
            "r": _u(rng, params.tumor_radius) * min(h, w),
            "aspect": _u(rng, params.tumor_aspect),
            "angle": rng.uniform(0, np.pi),
        })
    geom["tumors"] = tumors
    return geom


def _draw(geom: dict, params: PhantomParams, scale=1.0, tumor_radii=None) -> np.ndarray:
    h, w = params.image_size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - geom["cy"], xx - geom["cx"]
    c, s = np.cos(geom["angle"]), np.sin(geom["angle"])
    py, px = c * dy - s * dx, s * dy + c * dx
    ay, ax = geom["ay"] * scale, geom["ax"] * scale
    mask = np.zeros((h, w), dtype=np.uint8)
    if ay < 1 or ax < 1:
        return mask
    rho = np.sqrt((py / ay) ** 2 + (px / ax) ** 2)
    head = rho <= 1.0
    mask[head] = CSF
    mask[rho <= geom["gm"]] = GM
    mask[rho <= geom["wm"]] = WM

    for k, t in enumerate(geom["tumors"]):
        r = t["r"] * scale if tumor_radii is None else tumor_radii[k]
        if r <= 0.5:
            continue
        # blob centre: normalized head coordinates back to pixels
        ty, tx = t["u"] * ay, t["v"] * ax
        cy = geom["cy"] + c * ty + s * tx
        cx = geom["cx"] - s * ty + c * tx
        cb, sb = np.cos(t["angle"]), np.sin(t["angle"])
        by, bx = cb * (yy - cy) - sb * (xx - cx), sb * (yy - cy) + cb * (xx - cx)
        d = np.sqrt((by / r) ** 2 + (bx / (r * t["aspect"])) ** 2)
        mask[head & (d <= 1.0)] = ED
        mask[head & (d <= params.enhancing_frac)] = ET
        mask[head & (d <= params.core_frac)] = NCR
    return mask


def gen_phantom_mask(params: PhantomParams, seed) -> np.ndarray:
    """A 7-class phantom label map; a pure function of (params, seed)."""
    rng = np.random.default_rng(seed)
    if params.empty_prob and rng.uniform() < params.empty_prob:
        return np.zeros(params.image_size, dtype=np.uint8)
    return _draw(_sample_geometry(params, rng), params)


def render_intensity(mask, params: PhantomParams, seed) -> Slice2D:
    """Render a 16-bit MR-like image: per-class Normal(mean, std) times a smooth bias field."""
    mask = np.asarray(mask)
    if mask.size and mask.max() >= len(params.intensity_mean):
        raise RangeError(f"mask label {mask.max()} has no configured intensity")
    rng = np.random.default_rng(seed)
    mean = np.asarray(params.intensity_mean)[mask]
    std = np.asarray(params.intensity_std)[mask]
    img = mean + std * rng.standard_normal(mask.shape)
    if params.bias_amplitude:
        h, w = mask.shape
        yy, xx = np.mgrid[0:h, 0:w]
        gy, gx = 2 * yy / max(h - 1, 1) - 1, 2 * xx / max(w - 1, 1) - 1
        coef = rng.uniform(-1, 1, size=3)
        field = 1 + params.bias_amplitude * (coef[0] * gy + coef[1] * gx + coef[2] * gy * gx)
        img = img * field
    img = np.clip(np.round(img), 0, 0xFFFF).astype(np.uint16)
    return Slice2D(img, MR16)


def phantom_pair(params: PhantomParams, seed, index):
    """The (mask, image) pair at ``index`` of the stream ``seed``; independent of generation order."""
    mask = gen_phantom_mask(params, [seed, index, 0])
    image = render_intensity(mask, params, [seed, index, 1]).pixels
    return mask, image


def gen_synth_dataset(n: int, params: PhantomParams, seed, out_dir, provenance=SYNTHETIC,
                      source_id=None, renderer_params: PhantomParams | None = None):
    """Write ``n`` (mask, image) PNG pairs under ``out_dir/{mask,mr}`` and return (pairs, manifest).

    ``renderer_params`` renders images with different intensity settings than
    the ones that shaped the masks.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out_dir = Path(out_dir)
    (out_dir / "mask").mkdir(parents=True, exist_ok=True)
    (out_dir / "mr").mkdir(parents=True, exist_ok=True)
    source_id = source_id or f"phantom-s{seed}"
    rparams = renderer_params or params
    width = max(3, len(str(n - 1)))
    pairs, entries = [], []
    for i in range(n):
        mask = gen_phantom_mask(params, [seed, i, 0])
        image = render_intensity(mask, rparams, [seed, i, 1]).pixels
        name = slice_filename(source_id, i, width)
        write_png(Slice2D(mask, MASK8), out_dir / "mask" / name)
        write_png(Slice2D(image, MR16), out_dir / "mr" / name)
        pairs.append((mask, image))
        entries.append(Entry(f"mr/{name}", f"mask/{name}", source_id, i, provenance))
    return pairs, Manifest(entries, "all", seed if isinstance(seed, int) else None, out_dir)


def gen_phantom_volume(params: PhantomParams, n_slices: int, seed, source_id="phantom"):
    """(MR volume, label volume): an ellipsoidal head whose top and bottom slices are empty.

    Tumours are spheroids, so their cross-sections vary smoothly along z.
    """
    rng = np.random.default_rng(seed)
    geom = _sample_geometry(params, rng)
    zc = (n_slices - 1) / 2
    half = zc * _u(rng, (0.75, 0.95))  # < zc, so the first and last slices stay empty
    tumor_z = [zc + rng.uniform(-0.5, 0.5) * half for _ in geom["tumors"]]
    h, w = params.image_size
    labels = np.zeros((h, w, n_slices), dtype=np.int32)
    mr = np.zeros_like(labels)
    for k in range(n_slices):
        s2 = 1.0 - ((k - zc) / half) ** 2
        if s2 > 0.0:
            scale = np.sqrt(s2)
            radii = [np.sqrt(max(t["r"] ** 2 - (k - z) ** 2, 0.0)) for t, z in zip(geom["tumors"], tumor_z)]
            labels[:, :, k] = _draw(geom, params, scale, radii)
        mr[:, :, k] = render_intensity(labels[:, :, k], params, [seed, k]).pixels
    return Volume(mr, (1.0, 1.0, 1.0), source_id), Volume(labels, (1.0, 1.0, 1.0), source_id)


# ---------------------------------------------------------------- external ingestion


def ingest_external(mask_dir, image_dir=None, n_classes: int = 7) -> Manifest:
    """Validate externally generated mask PNGs (and optional paired MR PNGs).

    Every offending file is collected before a :class:`ValidationError` is raised.
    """
    mask_dir = Path(mask_dir)
    names = sorted(p.name for p in mask_dir.glob("*.png"))
    offenders, entries = [], []
    image_names = set()
    if image_dir is not None:
        image_dir = Path(image_dir)
        image_names = {p.name for p in image_dir.glob("*.png")}
        for extra in sorted(image_names - set(names)):
            offenders.append((extra, "image has no matching mask"))
    for name in names:
        try:
            s = read_png(mask_dir / name)
        except Exception as exc:
            offenders.append((name, f"unreadable PNG: {exc}"))
            continue
        if s.kind != MASK8:
            offenders.append((name, "mask must be an 8-bit PNG, found 16-bit"))
            continue
        if s.pixels.size and int(s.pixels.max()) >= n_classes:
            offenders.append((name, f"label {int(s.pixels.max())} outside 0..{n_classes - 1}"))
            continue
        mr = None
        if image_dir is not None:
            if name not in image_names:
                offenders.append((name, "mask has no matching image"))
                continue
            try:
                img = read_png(image_dir / name)
            except Exception as exc:
                offenders.append((name, f"unreadable image PNG: {exc}"))
                continue
            if img.kind != MR16:
                offenders.append((name, "image must be a 16-bit PNG"))
                continue
            if img.pixels.shape != s.pixels.shape:
                offenders.append((name, f"image {img.pixels.shape} and mask {s.pixels.shape} differ in size"))
                continue
            mr = str(image_dir / name)
        src, idx = s.origin
        entries.append(Entry(mr, str(mask_dir / name), src, idx, SYNTHETIC))
    if offenders:
        raise ValidationError(offenders)
    return Manifest(entries, "all", None, None)
