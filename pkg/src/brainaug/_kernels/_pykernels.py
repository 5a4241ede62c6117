"""Pure numpy implementations of the hot kernels.

These are the reference versions; the compiled extension must agree with them
bit for bit. They are also what runs when the extension is not built.
"""
import numpy as np


def unfilter_scanlines(raw, bpp):
    """Undo PNG per-row filtering.

    ``raw`` is a uint8 array of shape (height, 1 + rowbytes) where column 0 holds
    the filter type byte. Returns the reconstructed (height, rowbytes) uint8 array.
    """
    raw = np.ascontiguousarray(raw, dtype=np.uint8)
    height, width = raw.shape[0], raw.shape[1] - 1
    out = np.zeros((height, width), dtype=np.uint8)
    prev = np.zeros(width, dtype=np.int64)
    for y in range(height):
        ftype = int(raw[y, 0])
        line = raw[y, 1:].astype(np.int64)
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = np.empty_like(line)
            for lane in range(bpp):
                cur[lane::bpp] = np.cumsum(line[lane::bpp]) & 0xFF
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype == 3:
            vals = line.tolist()
            up = prev.tolist()
            for i in range(width):
                left = vals[i - bpp] if i >= bpp else 0
                vals[i] = (vals[i] + ((left + up[i]) >> 1)) & 0xFF
            cur = np.asarray(vals, dtype=np.int64)
        elif ftype == 4:
            vals = line.tolist()
            up = prev.tolist()
            for i in range(width):
                if i >= bpp:
                    a, c = vals[i - bpp], up[i - bpp]
                else:
                    a = c = 0
                b = up[i]
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                vals[i] = (vals[i] + pred) & 0xFF
            cur = np.asarray(vals, dtype=np.int64)
        else:
            raise ValueError(f"invalid filter type {ftype} on row {y}")
        out[y] = cur
        prev = cur
    return out


def im2col3x3(x):
    """Gather zero-padded 3x3 neighbourhoods.

    (N, C, H, W) -> (N*H*W, C*9), column order (c, ky, kx).
    """
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((n, h, w, c, 3, 3), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, :, :, :, ky, kx] = xp[:, :, ky:ky + h, kx:kx + w].transpose(0, 2, 3, 1)
    return cols.reshape(n * h * w, c * 9)


def col2im3x3(cols, shape):
    """Adjoint of :func:`im2col3x3`: scatter-add columns back to an (N, C, H, W) array."""
    n, c, h, w = shape
    cols = cols.reshape(n, h, w, c, 3, 3)
    xp = np.zeros((n, c, h + 2, w + 2), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            xp[:, :, ky:ky + h, kx:kx + w] += cols[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(xp[:, :, 1:-1, 1:-1])


def maxpool2x2_forward(x):
    """2x2/stride-2 max pool. Returns (out, argmax) with argmax in 0..3 (row-major, first max wins)."""
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(dout, idx):
    n, c, h2, w2 = dout.shape
    win = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(win, idx[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
    return np.ascontiguousarray(dx)
