"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback is used. Set ``SHIPPROMPT_KERNELS=python`` to force the
fallback (``=compiled`` makes a missing extension an import error).
"""
import os

import numpy as np

from . import _kernels_py

_requested = os.environ.get("SHIPPROMPT_KERNELS", "auto").lower()

if _requested == "python":
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"


def _c2(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def layernorm_forward(x, gamma, beta, eps=1e-5):
    return _impl.layernorm_forward(_c2(x), _c2(gamma), _c2(beta), eps)


def layernorm_backward(dy, xhat, rstd, gamma):
    return _impl.layernorm_backward(_c2(dy), _c2(xhat), _c2(rstd), _c2(gamma))


def softmax_forward(s, causal_len=0):
    return _impl.softmax_forward(_c2(s), causal_len)


def softmax_backward(dy, y):
    return _impl.softmax_backward(_c2(dy), _c2(y))


def quick_gelu_forward(x):
    return _impl.quick_gelu_forward(_c2(x))


def quick_gelu_backward(dy, x, sig):
    return _impl.quick_gelu_backward(_c2(dy), _c2(x), _c2(sig))


def using(backend):
    """Return a namespace bound to one backend (``"python"`` or ``"compiled"``)."""
    if backend == "python":
        return _kernels_py
    from . import _ckernels
    return _ckernels
