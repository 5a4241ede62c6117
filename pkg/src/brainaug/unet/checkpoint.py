"""Checkpoint record and its binary container.

Layout (all integers little-endian)::

    magic   8 bytes  b"BRAUGCKP"
    version u32
    meta    u32 length + UTF-8 JSON (configs, epoch, val_error, stats, adam step)
    count   u32
    count x { u16 name length, name, u8 ndim, ndim x u64 dims, float64 LE data }
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import ClassWeights, NormStats
from ..errors import ParseError, UnsupportedFormatError
from .model import UNet, UNetConfig

MAGIC = b"BRAUGCKP"
VERSION = 1


@dataclass
class Checkpoint:
    params: dict
    bn_state: dict
    epoch: int
    val_error: float
    unet_config: UNetConfig
    norm_stats: NormStats | None = None
    class_weights: ClassWeights | None = None
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_t: int = 0

    def __post_init__(self):
        if not 0.0 <= self.val_error <= 1.0:
            raise ValueError(f"val_error {self.val_error} outside [0, 1]")

    def model(self) -> UNet:
        params = {k: v.copy() for k, v in self.params.items()}
        state = {k: v.copy() for k, v in self.bn_state.items()}
        return UNet(self.unet_config, params, state)

    def arrays(self) -> dict:
        out = {}
        for prefix, d in (("param", self.params), ("state", self.bn_state), ("adam_m", self.adam_m), ("adam_v", self.adam_v)):
            for k in sorted(d):
                out[f"{prefix}/{k}"] = d[k]
        return out

    def meta(self) -> dict:
        return {
            "epoch": self.epoch,
            "val_error": self.val_error,
            "unet_config": self.unet_config.to_dict(),
            "norm_stats": None if self.norm_stats is None else [self.norm_stats.scale_max, self.norm_stats.mean_after_scale],
            "class_weights": None if self.class_weights is None else list(self.class_weights.w),
            "adam_t": self.adam_t,
        }


def dumps(ckpt: Checkpoint) -> bytes:
    meta = json.dumps(ckpt.meta(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta)), meta]
    arrays = ckpt.arrays()
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        nb = name.encode()
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> Checkpoint:
    if buf[:8] != MAGIC:
        raise ParseError("not a checkpoint file (bad magic)", offset=0)
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ParseError("truncated checkpoint", offset=pos)
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise UnsupportedFormatError(f"checkpoint version {version}")
    (mlen,) = take("<I")
    meta = json.loads(buf[pos:pos + mlen].decode())
    pos += mlen
    (count,) = take("<I")
    groups = {"param": {}, "state": {}, "adam_m": {}, "adam_v": {}}
    for _ in range(count):
        (nlen,) = take("<H")
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = take("<B")
        dims = take(f"<{ndim}Q") if ndim else ()
        nbytes = 8 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise ParseError(f"truncated array {name!r}", offset=pos)
        arr = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=pos).reshape(dims)
        pos += nbytes
        prefix, key = name.split("/", 1)
        groups[prefix][key] = arr

    cfg = UNetConfig(**meta["unet_config"])
    dtype = np.dtype(cfg.dtype)

    def cast(d):
        return {k: v.astype(dtype) for k, v in d.items()}

    ns = meta["norm_stats"]
    cw = meta["class_weights"]
    return Checkpoint(
        params=cast(groups["param"]),
        bn_state=cast(groups["state"]),
        epoch=meta["epoch"],
        val_error=meta["val_error"],
        unet_config=cfg,
        norm_stats=None if ns is None else NormStats(*ns),
        class_weights=None if cw is None else ClassWeights(tuple(cw)),
        adam_m=cast(groups["adam_m"]),
        adam_v=cast(groups["adam_v"]),
        adam_t=meta["adam_t"],
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
