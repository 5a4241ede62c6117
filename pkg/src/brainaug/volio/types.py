from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import RangeError, ShapeError

MR16 = "MR16"
MASK8 = "Mask8"
_LIMITS = {MR16: 0xFFFF, MASK8: 0xFF}


@dataclass
class Volume:
    """A 3D scalar scan grid, indexed (x, y, z) with z the axial axis."""

    data: np.ndarray
    voxel_size: tuple = (1.0, 1.0, 1.0)
    source_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ShapeError(f"volume data must be 3D, got shape {self.data.shape}")
        if self.data.size and (self.data.min() < 0 or self.data.max() > 0xFFFF):
            raise RangeError(f"volume {self.source_id!r} values outside [0, 65535]")

    @property
    def dims(self):
        return tuple(self.data.shape)


@dataclass
class Slice2D:
    pixels: np.ndarray
    kind: str = MR16
    origin: tuple = field(default=("", None))

    def __post_init__(self):
        if self.kind not in _LIMITS:
            raise ValueError(f"unknown slice kind {self.kind!r}")
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2:
            raise ShapeError(f"slice must be 2D, got shape {self.pixels.shape}")

    def check_range(self, n_classes=None):
        px = self.pixels
        if px.size == 0:
            return
        hi = _LIMITS[self.kind] if n_classes is None else n_classes - 1
        lo, top = px.min(), px.max()
        if lo < 0 or top > hi or (px.dtype.kind == "f" and np.any(px != np.round(px))):
            raise RangeError(f"{self.kind} slice values [{lo}, {top}] outside [0, {hi}]")

    def __eq__(self, other):
        if not isinstance(other, Slice2D):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )
