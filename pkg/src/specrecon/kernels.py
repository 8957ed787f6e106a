"""Backend selection for the per-pixel kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``SPECRECON_BACKEND=python`` to force the fallback.
"""

import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

_BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    _BACKENDS["compiled"] = _compiled


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        name = BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}") from None


def _select():
    wanted = os.environ.get("SPECRECON_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in _BACKENDS:
            logger.warning("backend %r unavailable, using the numpy fallback", wanted)
            return "python"
        return wanted
    return "compiled" if _compiled is not None else "python"


BACKEND = _select()
block_apply = get_backend().block_apply
epssw_apply = get_backend().epssw_apply
