"""Backend selection for the Gaussian stream kernel.

The compiled module is used when importable; set ``COREOPT_FORCE_PYTHON=1``
to force the numpy fallback. Both produce bit-identical output.
"""

import os

from . import _kernels_py

if os.environ.get("COREOPT_FORCE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
gaussian_rows = _impl.gaussian_rows
normal_ppf = _impl.normal_ppf
philox4x32 = _impl.philox4x32
dot_rows = _impl.dot_rows
combine_rows = _impl.combine_rows

__all__ = ["BACKEND", "combine_rows", "dot_rows", "gaussian_rows", "normal_ppf", "philox4x32"]
