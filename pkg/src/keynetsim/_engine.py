"""Core selection: the compiled extension when importable, else the
pure-Python reference.  Set KEYNETSIM_PURE=1 to force the pure core."""

import os

from . import _core_py


def _load():
    if os.environ.get("KEYNETSIM_PURE", "0") not in ("", "0"):
        return _core_py, False
    try:
        from . import _core
    except ImportError:
        return _core_py, False
    return _core, True


core, COMPILED = _load()
