"""Backend selection for the hot sampling kernels.

The kernels in ``surveykit.kernels`` are written against the subset of numpy
that numba's nopython mode supports, and draw randomness only through
``numpy.random.Generator.random()``.  Numba reproduces numpy's Generator
bit stream exactly, so compiled and interpreted kernels return identical
samples for the same seed.

The active backend is fixed at import time from the environment:

    SURVEYKIT_BACKEND=auto    use numba when importable (default)
    SURVEYKIT_BACKEND=numba   require numba, fail loudly if missing
    SURVEYKIT_BACKEND=numpy   pure-numpy fallback, no compilation
"""

import os

_ENV_VAR = "SURVEYKIT_BACKEND"


def _resolve():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'auto', 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numpy":
        return "numpy", None
    try:
        from numba import njit
    except ImportError:
        if choice == "numba":
            raise ImportError(f"{_ENV_VAR}=numba but numba is not importable")
        return "numpy", None
    return "numba", njit


ACTIVE_BACKEND, _njit = _resolve()


def jit(func):
    """Compile a kernel with numba when the numba backend is active."""
    if _njit is None:
        return func
    return _njit(cache=True)(func)
