"""Recurrence kernels with runtime backend selection.

The compiled extension (``_fast``) is preferred when the build produced
it; otherwise the numpy reference (``_ref``) takes over transparently.
Callers must go through this module's attributes at call time (``from
... import kernels; kernels.gru_forward(...)``) so that
:func:`select_backend` can swap implementations for parity tests and the
benchmark.
"""

import logging

from . import _ref

_log = logging.getLogger(__name__)

_KERNEL_NAMES = ("gru_forward", "gru_backward", "decoder_forward", "decoder_backward")

try:
    from . import _fast

    _FAST = _fast
except ImportError:  # pragma: no cover - build-env dependent
    _FAST = None

BACKEND = "ref"


def available_backends():
    return ("ref", "fast") if _FAST is not None else ("ref",)


def select_backend(name: str) -> str:
    """Activate a kernel backend ("fast" or "ref"); returns the previous one."""
    global BACKEND
    if name == "fast" and _FAST is None:
        raise RuntimeError("compiled kernels are not available in this build")
    if name not in ("ref", "fast"):
        raise ValueError(f"unknown kernel backend {name!r}")
    impl = _FAST if name == "fast" else _ref
    previous = BACKEND
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name
    return previous


if _FAST is not None:
    select_backend("fast")
else:  # pragma: no cover - build-env dependent
    _log.info("compiled kernels unavailable; using the numpy fallback")
    select_backend("ref")
