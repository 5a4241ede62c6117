"""Volume and slice I/O: NIFTI-1 volumes in, lossless grayscale PNG slices out."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import ParseError, RangeError
from .nifti import read_nifti, write_nifti
from .png import decode_png, encode_png
from .types import MASK8, MR16, Slice2D, Volume

__all__ = [
    "MASK8",
    "MR16",
    "Slice2D",
    "Volume",
    "crop",
    "pad_amounts",
    "pad_to_pow2",
    "read_nifti",
    "read_png",
    "slice_axial",
    "slice_filename",
    "write_nifti",
    "write_png",
]

_NAME_RE = re.compile(r"^(?P<source>.+)_slice(?P<index>\d+)$")


def slice_axial(volume: Volume) -> list[Slice2D]:
    """Split a volume into its axial planes ``data[:, :, k]``, ascending k."""
    return [
        Slice2D(np.ascontiguousarray(volume.data[:, :, k]), MR16, (volume.source_id, k))
        for k in range(volume.data.shape[2])
    ]


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def pad_amounts(shape):
    """((top, bottom), (left, right)) zero padding that centres ``shape`` in the next power of two.

    An odd remainder puts the extra row/column on the bottom/right.
    """
    out = []
    for n in shape:
        total = _next_pow2(n) - n
        out.append((total // 2, total - total // 2))
    return tuple(out)


def pad_to_pow2(s: Slice2D) -> Slice2D:
    if min(s.pixels.shape) < 1:
        raise ValueError("slice dimensions must be >= 1")
    padded = np.pad(s.pixels, pad_amounts(s.pixels.shape), mode="constant", constant_values=0)
    return Slice2D(padded, s.kind, s.origin)


def crop(s: Slice2D, dims) -> Slice2D:
    """Inverse of :func:`pad_to_pow2` given the original (height, width)."""
    (top, _), (left, _) = pad_amounts(dims)
    h, w = dims
    return Slice2D(s.pixels[top:top + h, left:left + w].copy(), s.kind, s.origin)


def slice_filename(source_id: str, index: int, width: int = 3) -> str:
    return f"{source_id}_slice{index:0{width}d}.png"


def write_png(s: Slice2D, path) -> None:
    s.check_range()
    Path(path).write_bytes(encode_png(s.pixels, 16 if s.kind == MR16 else 8))


def read_png(path) -> Slice2D:
    path = Path(path)
    try:
        pixels = decode_png(path.read_bytes())
    except ParseError as exc:
        err = ParseError(f"{path.name}: {exc}")
        err.offset = exc.offset
        raise err from None
    kind = MR16 if pixels.dtype == np.uint16 else MASK8
    m = _NAME_RE.match(path.stem)
    origin = (m["source"], int(m["index"])) if m else (path.stem, None)
    return Slice2D(pixels, kind, origin)
