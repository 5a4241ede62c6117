"""Single-file NIFTI-1 (.nii) reader and writer.

Only the subset needed for scalar scan volumes is handled: three spatial
dimensions, datatypes uint8/int16/uint16/float32, identity intensity scaling,
no internal compression (gunzip before calling).
"""
from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import LossyDataError, ParseError, UnsupportedFormatError
from .types import Volume

HEADER_SIZE = 348

# NIFTI datatype code -> numpy base type
DATATYPES = {
    2: np.uint8,
    4: np.int16,
    16: np.float32,
    512: np.uint16,
}
_CODES = {np.dtype(v): k for k, v in DATATYPES.items()}

_OFF_DIM = 40
_OFF_DATATYPE = 70
_OFF_BITPIX = 72
_OFF_PIXDIM = 76
_OFF_VOX_OFFSET = 108
_OFF_SCL_SLOPE = 112
_OFF_SCL_INTER = 116
_OFF_MAGIC = 344


def _endianness(buf):
    if len(buf) < HEADER_SIZE:
        raise ParseError(f"file too short for a NIFTI-1 header ({len(buf)} bytes)", offset=len(buf))
    for order in ("<", ">"):
        if struct.unpack_from(order + "i", buf, 0)[0] == HEADER_SIZE:
            return order
    raise ParseError("sizeof_hdr is not 348", offset=0)


def parse_header(buf: bytes) -> dict:
    order = _endianness(buf)
    magic = bytes(buf[_OFF_MAGIC:_OFF_MAGIC + 4])
    if magic == b"ni1\x00":
        raise UnsupportedFormatError("two-file NIFTI (.hdr/.img) is not supported")
    if magic != b"n+1\x00":
        raise ParseError(f"bad magic {magic!r}", offset=_OFF_MAGIC)

    dim = struct.unpack_from(order + "8h", buf, _OFF_DIM)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise ParseError(f"dim[0]={ndim} out of range 1..7", offset=_OFF_DIM)
    if any(d < 1 for d in dim[1:ndim + 1]):
        raise ParseError(f"non-positive dimension in {dim[1:ndim + 1]}", offset=_OFF_DIM + 2)
    shape = list(dim[1:ndim + 1]) + [1] * max(0, 3 - ndim)
    if any(d != 1 for d in shape[3:]):
        raise UnsupportedFormatError(f"only 3D volumes are supported, got dims {tuple(shape)}")
    shape = tuple(shape[:3])

    datatype, bitpix = struct.unpack_from(order + "2h", buf, _OFF_DATATYPE)
    if datatype not in DATATYPES:
        raise UnsupportedFormatError(f"unsupported NIFTI datatype code {datatype}")
    dtype = np.dtype(DATATYPES[datatype]).newbyteorder(order)
    if bitpix != dtype.itemsize * 8:
        raise ParseError(f"bitpix {bitpix} inconsistent with datatype {datatype}", offset=_OFF_BITPIX)

    pixdim = struct.unpack_from(order + "8f", buf, _OFF_PIXDIM)
    (vox_offset,) = struct.unpack_from(order + "f", buf, _OFF_VOX_OFFSET)
    if vox_offset != int(vox_offset) or vox_offset < HEADER_SIZE:
        raise ParseError(f"invalid vox_offset {vox_offset}", offset=_OFF_VOX_OFFSET)
    slope, inter = struct.unpack_from(order + "2f", buf, _OFF_SCL_SLOPE)
    # slope 0 or NaN means "no scaling" in NIFTI-1
    if not (slope == 0 or np.isnan(slope) or slope == 1):
        raise UnsupportedFormatError(f"non-trivial scl_slope {slope}")
    if not (inter == 0 or np.isnan(inter)):
        raise UnsupportedFormatError(f"non-trivial scl_inter {inter}")

    return {
        "shape": shape,
        "dtype": dtype,
        "voxel_size": tuple(float(p) for p in pixdim[1:4]),
        "vox_offset": int(vox_offset),
    }


def read_nifti(path, source_id: str | None = None) -> Volume:
    """Decode a single-file NIFTI-1 volume (``.nii`` or ``.nii.gz``) without altering any voxel value.

    Float data must be integer valued; it is converted exactly or rejected with
    :class:`LossyDataError`.
    """
    path = Path(path)
    buf = path.read_bytes()
    if path.suffix == ".gz":
        buf = gzip.decompress(buf)
    hdr = parse_header(buf)
    nvox = int(np.prod(hdr["shape"]))
    need = hdr["vox_offset"] + nvox * hdr["dtype"].itemsize
    if len(buf) < need:
        raise ParseError(f"truncated data: need {need} bytes, file has {len(buf)}", offset=len(buf))
    flat = np.frombuffer(buf, dtype=hdr["dtype"], count=nvox, offset=hdr["vox_offset"])
    data = flat.reshape(hdr["shape"], order="F")
    if data.dtype.kind == "f":
        if not np.all(np.isfinite(data)) or np.any(data != np.round(data)):
            raise LossyDataError(f"{path.name}: float volume holds non-integer values")
    data = np.ascontiguousarray(data.astype(np.int32))
    if source_id is None:
        source_id = path.name.split(".")[0]
    return Volume(data=data, voxel_size=hdr["voxel_size"], source_id=source_id)


def write_nifti(volume: Volume, path, dtype=np.int16) -> None:
    """Write ``volume`` as a little-endian single-file NIFTI-1 image."""
    dtype = np.dtype(dtype)
    if dtype not in _CODES:
        raise UnsupportedFormatError(f"cannot write dtype {dtype}")
    data = np.asarray(volume.data)
    cast = data.astype(dtype)
    if not np.array_equal(cast.astype(np.int64), data.astype(np.int64)):
        raise LossyDataError(f"volume values do not fit in {dtype}")
    hdr = bytearray(352)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    dims = (3,) + tuple(data.shape) + (1, 1, 1, 1)
    struct.pack_into("<8h", hdr, _OFF_DIM, *dims)
    struct.pack_into("<2h", hdr, _OFF_DATATYPE, _CODES[dtype], dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, _OFF_PIXDIM, 1.0, *volume.voxel_size, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, _OFF_VOX_OFFSET, 352.0)
    struct.pack_into("<2f", hdr, _OFF_SCL_SLOPE, 1.0, 0.0)
    hdr[_OFF_MAGIC:_OFF_MAGIC + 4] = b"n+1\x00"
    body = cast.astype(dtype.newbyteorder("<")).tobytes(order="F")
    Path(path).write_bytes(bytes(hdr) + body)
