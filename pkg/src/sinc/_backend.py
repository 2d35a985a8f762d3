"""Pick the latent-row kernel implementation.

The compiled extension is used when it imports; ``SINC_BACKEND=python``
forces the pure-Python fallback.
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled


def backend_name(name=None) -> str:
    """Name of the backend that ``resolve(name)`` would return."""
    return "compiled" if resolve(name) is _compiled else "python"


def resolve(name=None):
    """Return the kernel module for ``name`` ('compiled', 'python' or None=auto)."""
    if name is None:
        name = os.environ.get("SINC_BACKEND", "").strip().lower() or None
    if name is None:
        return _compiled if _compiled is not None else _fallback
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}; choose 'compiled' or 'python'")
    if name not in BACKENDS:
        raise ImportError("compiled kernels are not built; reinstall with Cython available")
    return BACKENDS[name]
