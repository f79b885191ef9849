"""Hot numerical kernels with a compiled core and a pure-Python fallback.

The compiled extension ``_core`` is used when it imports cleanly; otherwise
the functions come from :mod:`artifact.kernels.fallback`.  Set the
environment variable ``ARTIFACT_KERNELS=python`` to force the fallback.
``BACKEND`` names the active implementation.
"""
import importlib
import os

from . import fallback

_NAMES = (
    "e1", "e1_scaled", "e1_array", "e1_scaled_array", "bellman_sweep",
    "interp_value", "lookahead_index", "simulate_chunk",
)


def _load_core():
    try:
        return importlib.import_module(__name__ + "._core")
    except ImportError:
        return None


_core = None
if os.environ.get("ARTIFACT_KERNELS", "").lower() != "python":
    _core = _load_core()

BACKEND = "cython" if _core is not None else "python"
_impl = _core if _core is not None else fallback

e1 = _impl.e1
e1_scaled = _impl.e1_scaled
e1_array = _impl.e1_array
e1_scaled_array = _impl.e1_scaled_array
bellman_sweep = _impl.bellman_sweep
interp_value = _impl.interp_value
lookahead_index = _impl.lookahead_index
simulate_chunk = _impl.simulate_chunk


def available_backends():
    """Mapping of backend name to module for every importable implementation."""
    out = {"python": fallback}
    core = _core if _core is not None else _load_core()
    if core is not None:
        out["cython"] = core
    return out


__all__ = ["BACKEND", "available_backends", *_NAMES]
