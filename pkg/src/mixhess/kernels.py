"""Backend selection for the interior kernels.

The compiled extension is used when it was built; set ``MIXHESS_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

BACKEND = "python"
if not os.environ.get("MIXHESS_PURE_PYTHON"):
    try:
        from ._ckernels import interior_jacobian, interior_residual
        BACKEND = "cython"
    except ImportError:
        pass
if BACKEND == "python":
    from ._pykernels import interior_jacobian, interior_residual

__all__ = ["BACKEND", "interior_jacobian", "interior_residual"]
