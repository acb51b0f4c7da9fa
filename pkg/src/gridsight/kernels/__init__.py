"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set ``GRIDSIGHT_KERNELS=python``
to force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if os.environ.get("GRIDSIGHT_KERNELS", "").lower() == "python" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_impl = BACKENDS[BACKEND]

im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
vote = _impl.vote

__all__ = [
    "BACKEND",
    "BACKENDS",
    "im2col3x3",
    "col2im3x3",
    "maxpool2_forward",
    "maxpool2_backward",
    "vote",
]
