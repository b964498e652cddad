"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension (``_ckernels``) is used when it imports; otherwise the
numpy/pure-Python twin in ``_pykernels`` is selected. Setting the environment
variable ``SOFTLEX_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("cython", "python" or None for the default)."""
    if name is None:
        return _active
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _select() -> tuple[str, ModuleType]:
    forced = os.environ.get("SOFTLEX_BACKEND", "").strip().lower()
    if forced == "python" or _ckernels is None:
        return "python", _pykernels
    return "cython", _ckernels


BACKEND, _active = _select()

match_spans = _active.match_spans
viterbi = _active.viterbi
log_partition = _active.log_partition
lstm_recurrence = _active.lstm_recurrence
