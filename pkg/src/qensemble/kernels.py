"""Backend selection for the statevector hot loops.

The compiled Cython extension is used when it imports; otherwise the numpy
fallback is used. Set ``QENSEMBLE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("QENSEMBLE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

apply_1q = _impl.apply_1q
apply_cnot = _impl.apply_cnot
expect_z = _impl.expect_z

__all__ = ["BACKEND", "apply_1q", "apply_cnot", "expect_z", "python_kernels"]

python_kernels = _kernels_py
