"""Backend selection for the hot tree-search kernel.

The compiled Cython extension is preferred when present; otherwise the
numpy fallback is used.  ``DRIFTDRO_CORE=python`` forces the fallback
(useful for the backend benchmark and for debugging).
"""

import os

from . import _fallback

try:
    from . import _treekernel
    _HAVE_COMPILED = True
except ImportError:
    _treekernel = None
    _HAVE_COMPILED = False


def available_backends():
    names = ["python"]
    if _HAVE_COMPILED:
        names.insert(0, "compiled")
    return names


def get_backend(name=None):
    """Return (module, name) implementing ``build_depth2_tables``."""
    if name is None:
        name = os.environ.get("DRIFTDRO_CORE", "").strip() or None
    if name in (None, "auto"):
        name = "compiled" if _HAVE_COMPILED else "python"
    if name == "compiled":
        if not _HAVE_COMPILED:
            raise RuntimeError("compiled core requested but the extension is not built")
        return _treekernel, "compiled"
    if name == "python":
        return _fallback, "python"
    raise ValueError(f"unknown core backend: {name!r}")


def active_backend_name():
    return get_backend()[1]
