"""Select the compiled core when available, else the numpy fallback.

Set ``ADAPTSPH_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import importlib
import os

from . import _fallback


def _load_compiled():
    try:
        return importlib.import_module("adaptsph._core")
    except ImportError:
        return None


_compiled = _load_compiled()

if os.environ.get("ADAPTSPH_BACKEND", "").lower() == "python" or _compiled is None:
    core = _fallback
else:
    core = _compiled


def available() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "cython")
    return names


def get(name: str | None = None):
    """Return a backend module by name (``"cython"`` or ``"python"``)."""
    if name is None:
        return core
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled core not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
