"""Loss-kernel backend selection.

Prefers the compiled extension; falls back to the pure-Python reference
when the extension is missing or when SOLVSEARCH_PURE_PYTHON=1 is set.
Both expose the same `eval_loss_grad` and agree numerically (checked by
the test suite and timed by benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("SOLVSEARCH_PURE_PYTHON") == "1":
    _impl = _kernel_py
else:
    try:
        from . import _ratio_kernel as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernel_py

eval_loss_grad = _impl.eval_loss_grad


def backend_name() -> str:
    return _impl.BACKEND
