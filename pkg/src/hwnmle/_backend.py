"""Select the compiled kernels when available, else the NumPy fallback.

Set ``HWNMLE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("HWNMLE_PURE_PYTHON"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        from . import _kernels_py as _impl

BACKEND = "cython" if _impl.__name__.endswith("._kernels") else "python"

tangent_coords_batch = _impl.tangent_coords_batch
# numpy's vectorised log/sinh beat the scalar libm loop on large arrays
phi_batch = _kernels_py.phi_batch
scatter_phi = _impl.scatter_phi
wrap_batch = _impl.wrap_batch
