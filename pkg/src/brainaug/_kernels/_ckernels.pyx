# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``. Same signatures, same results."""
import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def unfilter_scanlines(raw, int bpp):
    cdef const unsigned char[:, ::1] r = np.ascontiguousarray(raw, dtype=np.uint8)
    cdef Py_ssize_t height = r.shape[0]
    cdef Py_ssize_t width = r.shape[1] - 1
    out_arr = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, i
    cdef int ftype, a, b, c, p, pa, pb, pc, pred
    for y in range(height):
        ftype = r[y, 0]
        if ftype == 0:
            for i in range(width):
                out[y, i] = r[y, i + 1]
        elif ftype == 1:
            for i in range(width):
                a = out[y, i - bpp] if i >= bpp else 0
                out[y, i] = (r[y, i + 1] + a) & 0xFF
        elif ftype == 2:
            for i in range(width):
                b = out[y - 1, i] if y > 0 else 0
                out[y, i] = (r[y, i + 1] + b) & 0xFF
        elif ftype == 3:
            for i in range(width):
                a = out[y, i - bpp] if i >= bpp else 0
                b = out[y - 1, i] if y > 0 else 0
                out[y, i] = (r[y, i + 1] + ((a + b) >> 1)) & 0xFF
        elif ftype == 4:
            for i in range(width):
                if i >= bpp:
                    a = out[y, i - bpp]
                    c = out[y - 1, i - bpp] if y > 0 else 0
                else:
                    a = 0
                    c = 0
                b = out[y - 1, i] if y > 0 else 0
                p = a + b - c
                pa = p - a if p >= a else a - p
                pb = p - b if p >= b else b - p
                pc = p - c if p >= c else c - p
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                out[y, i] = (r[y, i + 1] + pred) & 0xFF
        else:
            raise ValueError(f"invalid filter type {ftype} on row {y}")
    return out_arr


cdef void _im2col(const floating[:, :, :, ::1] x, floating[:, ::1] cols) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ch, yy, xx, ky, kx, sy, sx, row, col
    for b in range(n):
        for yy in range(h):
            for xx in range(w):
                row = (b * h + yy) * w + xx
                col = 0
                for ch in range(c):
                    for ky in range(3):
                        sy = yy + ky - 1
                        for kx in range(3):
                            sx = xx + kx - 1
                            if 0 <= sy < h and 0 <= sx < w:
                                cols[row, col] = x[b, ch, sy, sx]
                            else:
                                cols[row, col] = 0
                            col += 1


cdef void _col2im(const floating[:, ::1] cols, floating[:, :, :, ::1] x) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ch, yy, xx, ky, kx, sy, sx, row, col
    for b in range(n):
        for yy in range(h):
            for xx in range(w):
                row = (b * h + yy) * w + xx
                col = 0
                for ch in range(c):
                    for ky in range(3):
                        sy = yy + ky - 1
                        for kx in range(3):
                            sx = xx + kx - 1
                            if 0 <= sy < h and 0 <= sx < w:
                                x[b, ch, sy, sx] += cols[row, col]
                            col += 1


def im2col3x3(x):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    cols = np.empty((n * h * w, c * 9), dtype=x.dtype)
    if x.dtype == np.float64:
        _im2col[double](x, cols)
    elif x.dtype == np.float32:
        _im2col[float](x, cols)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return cols


def col2im3x3(cols, shape):
    cols = np.ascontiguousarray(cols)
    x = np.zeros(shape, dtype=cols.dtype)
    if cols.dtype == np.float64:
        _col2im[double](cols, x)
    elif cols.dtype == np.float32:
        _col2im[float](cols, x)
    else:
        raise TypeError(f"unsupported dtype {cols.dtype}")
    return x


cdef void _pool_fwd(const floating[:, :, :, ::1] x, floating[:, :, :, ::1] out,
                    signed char[:, :, :, ::1] idx) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h2 = out.shape[2], w2 = out.shape[3]
    cdef Py_ssize_t b, ch, i, j, k
    cdef floating best, v
    cdef signed char arg
    for b in range(n):
        for ch in range(c):
            for i in range(h2):
                for j in range(w2):
                    best = x[b, ch, 2 * i, 2 * j]
                    arg = 0
                    for k in range(1, 4):
                        v = x[b, ch, 2 * i + k // 2, 2 * j + k % 2]
                        if v > best:
                            best = v
                            arg = <signed char>k
                    out[b, ch, i, j] = best
                    idx[b, ch, i, j] = arg


cdef void _pool_bwd(const floating[:, :, :, ::1] dout, const signed char[:, :, :, ::1] idx,
                    floating[:, :, :, ::1] dx) noexcept nogil:
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], h2 = dout.shape[2], w2 = dout.shape[3]
    cdef Py_ssize_t b, ch, i, j
    cdef int k
    for b in range(n):
        for ch in range(c):
            for i in range(h2):
                for j in range(w2):
                    k = idx[b, ch, i, j]
                    dx[b, ch, 2 * i + k // 2, 2 * j + k % 2] = dout[b, ch, i, j]


def maxpool2x2_forward(x):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    out = np.empty((n, c, h // 2, w // 2), dtype=x.dtype)
    idx = np.empty((n, c, h // 2, w // 2), dtype=np.int8)
    if x.dtype == np.float64:
        _pool_fwd[double](x, out, idx)
    elif x.dtype == np.float32:
        _pool_fwd[float](x, out, idx)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return out, idx


def maxpool2x2_backward(dout, idx):
    dout = np.ascontiguousarray(dout)
    idx = np.ascontiguousarray(idx, dtype=np.int8)
    n, c, h2, w2 = dout.shape
    dx = np.zeros((n, c, h2 * 2, w2 * 2), dtype=dout.dtype)
    if dout.dtype == np.float64:
        _pool_bwd[double](dout, idx, dx)
    elif dout.dtype == np.float32:
        _pool_bwd[float](dout, idx, dx)
    else:
        raise TypeError(f"unsupported dtype {dout.dtype}")
    return dx
