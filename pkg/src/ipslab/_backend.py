"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``IPSLAB_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _pykernels.evolve}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.evolve

if os.environ.get("IPSLAB_PURE_PYTHON") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

evolve = BACKENDS[BACKEND]


def get_evolve(name: str | None = None):
    if name is None:
        return evolve
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
