"""Independent reference implementations used only by the tests.

These are written for obviousness, not speed: explicit loops, no shared code
with the package.
"""
import math

import numpy as np


# ---------------------------------------------------------------- convolutions


def conv3x3_direct(x, W, b):
    """Cross-correlation with zero 'same' padding, one tap at a time."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=np.float64)
    xp[:, :, 1:-1, 1:-1] = x
    y = np.zeros((n, W.shape[0], h, w))
    for o in range(W.shape[0]):
        for ci in range(c):
            for ky in range(3):
                for kx in range(3):
                    y[:, o] += W[o, ci, ky, kx] * xp[:, ci, ky:ky + h, kx:kx + w]
        y[:, o] += b[o]
    return y


def tconv_scatter(x, W, b):
    """Stride-2 transposed convolution: x[i, j] adds W[ky, kx] at output (2i+ky, 2j+kx), cropped to 2H x 2W."""
    n, c, h, w = x.shape
    out = np.zeros((n, W.shape[0], 2 * h + 2, 2 * w + 2))
    for i in range(h):
        for j in range(w):
            for ky in range(3):
                for kx in range(3):
                    out[:, :, 2 * i + ky, 2 * j + kx] += np.einsum("nc,oc->no", x[:, :, i, j], W[:, :, ky, kx])
    return out[:, :, :2 * h, :2 * w] + b[None, :, None, None]


def maxpool_loops(x):
    n, c, h, w = x.shape
    y = np.empty((n, c, h // 2, w // 2))
    for a in range(n):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    y[a, ch, i, j] = max(x[a, ch, 2 * i, 2 * j], x[a, ch, 2 * i, 2 * j + 1],
                                         x[a, ch, 2 * i + 1, 2 * j], x[a, ch, 2 * i + 1, 2 * j + 1])
    return y


# ---------------------------------------------------------------- finite differences


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f`` with respect to every element of ``x`` (modified in place, then restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric):
    """max |a - n| scaled by the larger of max |n| and 1e-6 (so all-zero gradients compare absolutely)."""
    analytic, numeric = np.asarray(analytic, np.float64), np.asarray(numeric, np.float64)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-6))


# ---------------------------------------------------------------- losses


def weighted_dice_loss_loops(probs, target, weights, eps=1e-5):
    n, c, h, w = probs.shape
    inter = 0.0
    total = 0.0
    for k in range(c):
        ik = 0.0
        tk = 0.0
        for a in range(n):
            for i in range(h):
                for j in range(w):
                    ik += probs[a, k, i, j] * target[a, k, i, j]
                    tk += probs[a, k, i, j] + target[a, k, i, j]
        inter += weights[k] * ik
        total += weights[k] * tk
    return 1.0 - (2 * inter + eps) / (total + eps)


# ---------------------------------------------------------------- qc


def zscore_norms_bruteforce(reference, candidates, eps=1e-8):
    """Pure-Python per-pixel mean / population std and standardized Euclidean norm."""
    ref = [np.asarray(m).tolist() for m in reference]
    n = len(ref)
    h, w = len(ref[0]), len(ref[0][0])
    mean = [[sum(r[i][j] for r in ref) / n for j in range(w)] for i in range(h)]
    std = [[math.sqrt(sum((r[i][j] - mean[i][j]) ** 2 for r in ref) / n) for j in range(w)] for i in range(h)]
    norms = []
    for m in candidates:
        m = np.asarray(m).tolist()
        s = 0.0
        for i in range(h):
            for j in range(w):
                z = (m[i][j] - mean[i][j]) / max(std[i][j], eps)
                s += z * z
        norms.append(math.sqrt(s))
    return norms


# ---------------------------------------------------------------- swd


def swd_bruteforce(a, b, directions):
    """Mean over direction columns of the mean |sorted(a.d) - sorted(b.d)|, in plain Python."""
    a, b = np.asarray(a).tolist(), np.asarray(b).tolist()
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    dirs = np.asarray(directions).T.tolist()
    total = 0.0
    for d in dirs:
        pa = sorted(math.fsum(x * y for x, y in zip(row, d)) for row in a)
        pb = sorted(math.fsum(x * y for x, y in zip(row, d)) for row in b)
        total += math.fsum(abs(u - v) for u, v in zip(pa, pb)) / n
    return total / len(dirs)


# ---------------------------------------------------------------- pyramid


def blur_reflect_loops(img):
    """Separable [1 4 6 4 1]/16 blur with mirror (no edge repeat) boundaries."""
    taps = [1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16]
    h, w = img.shape

    def mirror(k, size):
        if k < 0:
            return -k
        if k >= size:
            return 2 * (size - 1) - k
        return k

    tmp = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            tmp[i, j] = sum(taps[t] * img[i, mirror(j + t - 2, w)] for t in range(5))
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = sum(taps[t] * tmp[mirror(i + t - 2, h), j] for t in range(5))
    return out
