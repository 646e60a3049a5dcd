"""Selects the event-loop implementation at import time.

The compiled ``_kernel`` extension is used when it was built; otherwise (or
when ``PIPESCHED_PURE_PYTHON=1``) the pure-Python ``_kernel_py`` runs the
same algorithm with identical results.
"""
import os

from . import _kernel_py

if os.environ.get("PIPESCHED_PURE_PYTHON") == "1":
    run = _kernel_py.run
    BACKEND = "python"
else:
    try:
        from ._kernel import run  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        run = _kernel_py.run
        BACKEND = "python"

run_python = _kernel_py.run


def run_compiled():
    """The compiled ``run`` or ``None`` if the extension is not built."""
    try:
        from ._kernel import run as compiled
    except ImportError:
        return None
    return compiled
