"""Select the compiled kernel core, falling back to numpy.

Set ``SMGP_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

from . import _sm_py

if os.environ.get("SMGP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _sm_py
    BACKEND = "python"
else:
    try:
        from . import _sm_ext as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _sm_py
        BACKEND = "python"

sm_cov = _impl.sm_cov
sm_cov_sym = _impl.sm_cov_sym
sm_grad_contract = _impl.sm_grad_contract
