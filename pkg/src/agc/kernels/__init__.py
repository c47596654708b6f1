"""Hot loops behind a swappable backend.

``AGC_KERNELS=numpy`` forces the interpreter fallback; the default is the
numba build when numba imports cleanly.
"""

import os

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

_requested = os.environ.get("AGC_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"AGC_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba" and numba_impl is not None:
    BACKEND = "numba"
    _impl = numba_impl
else:
    BACKEND = "numpy"
    _impl = numpy_impl

greedy_applications = _impl.greedy_applications
refine_partition = _impl.refine_partition
component_labels = _impl.component_labels

__all__ = ["BACKEND", "greedy_applications", "refine_partition", "component_labels",
           "numpy_impl", "numba_impl"]
