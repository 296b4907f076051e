"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are used. Set ``ICPKIT_BACKEND=python``
to force the fallback.
"""
import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("ICPKIT_BACKEND", "").lower() != "python":
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = _pykernels
    BACKEND = "python"

available = {"python": _pykernels}
if compiled_kernels is not None:
    available["cython"] = compiled_kernels
