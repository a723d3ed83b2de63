"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; otherwise the
numpy implementations take over with identical semantics. DEMORET_BACKEND
overrides the choice: "auto" (default), "py" forces numpy, "cy" requires the
extension and raises if it is missing.
"""

from __future__ import annotations

import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

_CHOICES = ("auto", "py", "cy")


def _select():
    requested = os.environ.get("DEMORET_BACKEND", "auto").strip().lower()
    if requested not in _CHOICES:
        raise ImportError(
            f"DEMORET_BACKEND={requested!r} is not one of {_CHOICES}"
        )
    if requested == "py":
        return _kernels_py, "py"
    try:
        from . import _kernels  # compiled extension, absent on pure installs
        return _kernels, "cy"
    except ImportError:
        if requested == "cy":
            raise
        logger.debug("compiled kernels unavailable; using numpy fallback")
        return _kernels_py, "py"


kernels, BACKEND = _select()


def get_kernels(name: str):
    """Fetch a backend module by name ("py" or "cy"), for benchmarks/tests."""
    if name == "py":
        return _kernels_py
    if name == "cy":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
