"""Chain-CRF kernels with a compiled fast path.

The Cython extension is preferred when it was built; the numpy fallback in
pykernels is selected otherwise.  Set TAGSQL_PURE_PYTHON=1 before import to
force the fallback (parity tests and the kernel benchmark rely on this).
k-best decoding is numpy-only in both backends.
"""

from __future__ import annotations

import os

from tagsql.kernels import pykernels
from tagsql.kernels.pykernels import kbest_viterbi

if os.environ.get("TAGSQL_PURE_PYTHON"):
    _impl = pykernels
    BACKEND = "python"
else:
    try:
        from tagsql.kernels import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = pykernels
        BACKEND = "python"

forward_backward = _impl.forward_backward
viterbi = _impl.viterbi

__all__ = ["BACKEND", "forward_backward", "viterbi", "kbest_viterbi"]
