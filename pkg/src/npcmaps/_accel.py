"""Backend selection for the hot kernels.

Numba is used when it imports and ``NPCMAPS_DISABLE_NUMBA`` is unset (or
falsy). Setting the variable to ``1`` routes every kernel through its
pure-numpy twin, which is how the benchmark and the equivalence tests
exercise both paths.
"""
import os

ENV_FLAG = "NPCMAPS_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_set():
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numba" if HAVE_NUMBA and not _flag_set() else "numpy"


def backend():
    return _backend


def set_backend(name):
    """Switch backend at runtime ('numba' or 'numpy'); returns the previous one."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous


def njit(func):
    """Compile with numba when available; the plain function stays at ``.py_func``."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    func.py_func = func
    return func


def set_threads(n):
    """Cap numba's worker pool. The sweeps are sequential by design (Gauss-Seidel
    order fixes the result), so this only matters for user-added parallel code."""
    if HAVE_NUMBA and n:
        if "NUMBA_THREADING_LAYER" not in os.environ:
            # the system TBB is often too old; workqueue is always built in
            numba.config.THREADING_LAYER = "workqueue"
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
