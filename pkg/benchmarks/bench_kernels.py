"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with best-of-N wall time for each backend and the
speedup. Outputs of the two backends are checked for equality first.
"""
import argparse
import timeit

import numpy as np

from brainaug._kernels import _pykernels

try:
    from brainaug._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _png_rows(rng, h, rowbytes):
    raw = rng.integers(0, 256, size=(h, 1 + rowbytes), dtype=np.uint8)
    raw[:, 0] = rng.integers(0, 5, size=h)
    return raw


def cases(rng):
    x = rng.standard_normal((8, 16, 64, 64)).astype(np.float32)
    cols = rng.standard_normal((8 * 64 * 64, 16 * 9)).astype(np.float32)
    pooled, idx = _pykernels.maxpool2x2_forward(x)
    dout = rng.standard_normal(pooled.shape).astype(np.float32)
    raw = _png_rows(rng, 256, 512)
    return {
        "unfilter_scanlines 256x256 u16": ("unfilter_scanlines", (raw, 2)),
        "im2col3x3 8x16x64x64": ("im2col3x3", (x,)),
        "col2im3x3 8x16x64x64": ("col2im3x3", (cols, x.shape)),
        "maxpool2x2_forward 8x16x64x64": ("maxpool2x2_forward", (x,)),
        "maxpool2x2_backward 8x16x64x64": ("maxpool2x2_backward", (dout, idx)),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind == "f":
        # overlapping-window sums are accumulated in a different order
        return np.allclose(a, b, rtol=1e-5, atol=1e-5)
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':36s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, (name, a) in cases(rng).items():
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        if not _same(py(*a), cy(*a)):
            raise SystemExit(f"{name}: backends disagree")
        t_py = min(timeit.repeat(lambda: py(*a), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: cy(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:36s} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
