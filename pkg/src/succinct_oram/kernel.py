"""Backend selection for the tree kernel.

The compiled ``_ckernel`` extension is used when it was built; otherwise
the pure-Python ``_pykernel`` is loaded. Set ``SUCCINCT_ORAM_PURE=1`` to
force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernel

BACKENDS = {"python": _pykernel}

try:
    if os.environ.get("SUCCINCT_ORAM_PURE", "") not in ("", "0"):
        raise ImportError("pure-Python backend forced by environment")
    from . import _ckernel
except ImportError:
    BACKEND = "python"
else:
    BACKENDS["cython"] = _ckernel
    BACKEND = "cython"


def get(backend: str | None = None):
    """Kernel module for ``backend`` ('cython', 'python' or None = default)."""
    name = backend or BACKEND
    if name == "auto":
        name = BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def tree_core(backend: str | None = None, **kw):
    mod = get(backend)
    # the compiled kernel packs metadata words into one 64-bit window
    if mod is not _pykernel and 1 + kw["addr_width"] + kw["L"] > 57:
        mod = _pykernel
    return mod.TreeCore(**kw)


def two_choice_loads(first, second, bins: int, backend: str | None = None):
    return get(backend).two_choice_loads(first, second, bins)
