"""Lossless grayscale PNG codec (8- and 16-bit, non-interlaced).

The encoder picks a filter per scanline with the usual minimum-sum-of-absolute
differences heuristic. The decoder accepts any conforming grayscale 8/16-bit
file, verifies chunk CRCs, and skips ancillary chunks.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .. import _kernels
from ..errors import ParseError, UnsupportedFormatError

SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(ctype: bytes, data: bytes) -> bytes:
    crc = zlib.crc32(ctype + data) & 0xFFFFFFFF
    return struct.pack(">I", len(data)) + ctype + data + struct.pack(">I", crc)


def _filter_rows(rows: np.ndarray, bpp: int) -> np.ndarray:
    """Return the (h, 1 + rowbytes) filtered stream, one filter byte per row."""
    h, w = rows.shape
    x = rows.astype(np.int16)
    left = np.zeros_like(x)
    left[:, bpp:] = x[:, :-bpp]
    up = np.zeros_like(x)
    up[1:] = x[:-1]
    upleft = np.zeros_like(x)
    upleft[1:, bpp:] = x[:-1, :-bpp]

    p = left + up - upleft
    pa, pb, pc = np.abs(p - left), np.abs(p - up), np.abs(p - upleft)
    paeth = np.where((pa <= pb) & (pa <= pc), left, np.where(pb <= pc, up, upleft))

    cands = np.stack([
        x,
        x - left,
        x - up,
        x - ((left + up) >> 1),
        x - paeth,
    ]) & 0xFF
    # signed-byte magnitude, as libpng's heuristic
    cost = np.where(cands < 128, cands, 256 - cands).sum(axis=2)
    choice = np.argmin(cost, axis=0)
    out = np.empty((h, w + 1), dtype=np.uint8)
    out[:, 0] = choice
    out[:, 1:] = cands[choice, np.arange(h)]
    return out


def encode_png(pixels: np.ndarray, bitdepth: int, level: int = 6) -> bytes:
    if bitdepth not in (8, 16):
        raise UnsupportedFormatError(f"bit depth {bitdepth} not supported")
    h, w = pixels.shape
    if h < 1 or w < 1:
        raise ValueError("cannot encode an empty image")
    if bitdepth == 8:
        rows = np.ascontiguousarray(pixels, dtype=np.uint8)
    else:
        rows = np.ascontiguousarray(pixels, dtype=">u2").view(np.uint8).reshape(h, 2 * w)
    filtered = _filter_rows(rows, bitdepth // 8)
    ihdr = struct.pack(">IIBBBBB", w, h, bitdepth, 0, 0, 0, 0)
    return b"".join([
        SIGNATURE,
        _chunk(b"IHDR", ihdr),
        _chunk(b"IDAT", zlib.compress(filtered.tobytes(), level)),
        _chunk(b"IEND", b""),
    ])


def decode_png(buf: bytes) -> np.ndarray:
    """Decode a grayscale PNG to a uint8 or uint16 (native-endian) array."""
    if buf[:8] != SIGNATURE:
        raise ParseError("not a PNG file (bad signature)", offset=0)
    pos = 8
    ihdr = None
    idat = []
    seen_end = False
    while pos < len(buf):
        if pos + 8 > len(buf):
            raise ParseError("truncated chunk header", offset=pos)
        length, ctype = struct.unpack_from(">I4s", buf, pos)
        end = pos + 8 + length + 4
        if end > len(buf):
            raise ParseError(f"truncated {ctype!r} chunk", offset=pos)
        data = buf[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack_from(">I", buf, pos + 8 + length)
        if zlib.crc32(ctype + data) & 0xFFFFFFFF != crc:
            raise ParseError(f"CRC mismatch in {ctype!r} chunk", offset=pos)
        if ihdr is None and ctype != b"IHDR":
            raise ParseError("first chunk is not IHDR", offset=pos)
        if ctype == b"IHDR":
            if length != 13:
                raise ParseError("IHDR length is not 13", offset=pos)
            ihdr = struct.unpack(">IIBBBBB", data)
        elif ctype == b"IDAT":
            idat.append(data)
        elif ctype == b"IEND":
            seen_end = True
            break
        elif not (ctype[0] & 0x20):
            raise UnsupportedFormatError(f"unknown critical chunk {ctype!r}")
        pos = end
    if ihdr is None or not idat or not seen_end:
        raise ParseError("missing IHDR, IDAT or IEND", offset=pos)

    w, h, bitdepth, ctype_, comp, filt, interlace = ihdr
    if ctype_ != 0:
        raise UnsupportedFormatError(f"colour type {ctype_} is not grayscale")
    if bitdepth not in (8, 16):
        raise UnsupportedFormatError(f"bit depth {bitdepth} not supported")
    if comp != 0 or filt != 0:
        raise ParseError("unknown compression or filter method", offset=8 + 8 + 10)
    if interlace != 0:
        raise UnsupportedFormatError("interlaced PNG not supported")
    if w == 0 or h == 0:
        raise ParseError("zero image dimension", offset=16)

    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise ParseError(f"corrupt IDAT stream: {exc}") from None
    bpp = bitdepth // 8
    rowbytes = w * bpp
    if len(raw) != h * (rowbytes + 1):
        raise ParseError(f"IDAT holds {len(raw)} bytes, expected {h * (rowbytes + 1)}")
    try:
        rows = _kernels.unfilter_scanlines(np.frombuffer(raw, np.uint8).reshape(h, rowbytes + 1), bpp)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if bitdepth == 8:
        return rows
    return rows.view(">u2").reshape(h, w).astype(np.uint16)
