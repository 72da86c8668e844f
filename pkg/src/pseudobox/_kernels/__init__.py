"""Hot-loop kernels with a compiled fast path.

The skip-gram training loop is an order-dependent sequence of small
rank-1 updates, so it cannot be vectorized without changing the result.
When the Cython extension is importable it is used; otherwise a numpy
fallback provides identical semantics (only float summation order inside
dot products differs). Set PSEUDOBOX_PURE_PYTHON=1 to force the fallback.
"""

import os

from . import _core_py

_forced = os.environ.get("PSEUDOBOX_PURE_PYTHON", "") not in ("", "0")

if not _forced:
    try:
        from ._sgns import sgns_epoch

        BACKEND = "cython"
    except ImportError:
        sgns_epoch = _core_py.sgns_epoch
        BACKEND = "python"
else:
    sgns_epoch = _core_py.sgns_epoch
    BACKEND = "python"


def backend_name() -> str:
    return BACKEND
