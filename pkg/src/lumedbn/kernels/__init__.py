"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The numba backend is used when numba imports cleanly, unless the environment
variable ``LUMEDBN_DISABLE_NUMBA`` is set to a non-empty value other than
``0``. Both backends expose the same functions.
"""
import os
from types import SimpleNamespace

from . import _numpy

_NAMES = ("lagged_gram", "conjugate_terms", "chol_backsolve", "cell_fcd", "gibbs_sweep")


def _namespace(module, name):
    return SimpleNamespace(name=name, **{f: getattr(module, f) for f in _NAMES})


numpy_backend = _namespace(_numpy, "numpy")

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba missing
    numba_backend = None
else:
    numba_backend = _namespace(_numba, "numba")


def numba_disabled() -> bool:
    return os.environ.get("LUMEDBN_DISABLE_NUMBA", "") not in ("", "0")


def get_backend(name: str | None = None):
    """Return a kernel namespace; ``None`` applies the environment default."""
    if name is None:
        name = "numpy" if numba_disabled() or numba_backend is None else "numba"
    if name == "numba":
        if numba_backend is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return numba_backend
    if name == "numpy":
        return numpy_backend
    raise ValueError(f"unknown kernel backend {name!r}")


backend = get_backend()
