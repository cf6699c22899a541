"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation. ``use()`` switches at runtime (benchmarks, cross-checks).
"""

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

kernels = _compiled if _compiled is not None else _pykernels


def available():
    return sorted(_BACKENDS)


def current():
    return kernels.NAME


def use(name):
    """Select the kernel backend by name (``"compiled"`` or ``"python"``)."""
    global kernels
    try:
        kernels = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None
    return kernels
