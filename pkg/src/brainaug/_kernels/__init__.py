"""Hot kernels: PNG scanline unfiltering, 3x3 im2col/col2im and 2x2 max pooling.

The compiled extension is used when it was built; otherwise the numpy versions
in ``_pykernels`` are used. Set ``BRAINAUG_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("BRAINAUG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

unfilter_scanlines = _impl.unfilter_scanlines
im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward

__all__ = [
    "BACKEND",
    "unfilter_scanlines",
    "im2col3x3",
    "col2im3x3",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
]
