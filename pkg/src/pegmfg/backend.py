"""Kernel backend selection.

Imports the compiled Cython kernels when available, else falls back to the
pure-Python twins. Set ``PEGMFG_BACKEND=pure`` (or ``cython``) to force a
choice; forcing ``cython`` raises if the extension is missing.
"""

from __future__ import annotations

import os

from . import _pure

__all__ = ["KERNELS", "active_backend", "available_backends"]


def _load():
    want = os.environ.get("PEGMFG_BACKEND", "").strip().lower()
    if want == "pure":
        return _pure
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        if want == "cython":
            raise ImportError(
                "PEGMFG_BACKEND=cython but the compiled extension is not "
                "built; run `pip install -e .` or `python setup.py build_ext "
                "--inplace`"
            )
        return _pure
    return _kernels


KERNELS = _load()


def active_backend() -> str:
    """Name of the kernel backend in use ('cython' or 'pure')."""
    return KERNELS.BACKEND_NAME


def available_backends() -> dict:
    """Map backend name -> kernel module, for benchmarks and twin tests."""
    out = {"pure": _pure}
    try:
        from . import _kernels  # type: ignore[attr-defined]
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
