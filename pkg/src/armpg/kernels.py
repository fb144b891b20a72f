"""Kernel back-end selection.

The compiled ``_ckernels`` module is used when it imports; setting
``ARMPG_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("ARMPG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

rollout_segment = _impl.rollout_segment
discounted_backward = _impl.discounted_backward
mlp_logit = _impl.mlp_logit


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
