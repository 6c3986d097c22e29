"""Numerical kernel backend selection.

Imports the compiled speedup module when it is available, otherwise the
pure-numpy fallback. Set SILOFED_PURE_PY=1 to force the fallback (used by
the benchmark and by tests that compare backends).
"""

import os

from silofed import _kernels_py

if os.environ.get("SILOFED_PURE_PY") == "1":
    _impl = _kernels_py
else:
    try:
        from silofed import _speedups as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND

sgd_epochs = _impl.sgd_epochs
softmax_grad = _impl.softmax_grad
softmax_eval = _impl.softmax_eval
pairwise_sqdist = _impl.pairwise_sqdist
