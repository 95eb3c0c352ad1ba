"""Switch between numba-compiled kernels and the plain numpy path.

Set ``DUFFING_BLOWUP_PURE_NUMPY=1`` before import to run every kernel as
ordinary Python/numpy code (slow, but needs no compiler). numba's own
``NUMBA_DISABLE_JIT`` is honoured as well.
"""
import os

_FLAG = "DUFFING_BLOWUP_PURE_NUMPY"


def _wants_numba():
    if os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on"):
        return False
    if os.environ.get("NUMBA_DISABLE_JIT", "0").strip() not in ("", "0"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _wants_numba()

if USE_NUMBA:
    import numba

    def jit(fn=None, *, cache=True, inline=False):
        """``numba.njit`` with on-disk caching; identity in numpy mode.

        ``inline=True`` inlines at the numba IR level, which saves the
        per-call reference counting of array arguments in tiny hot functions.
        """
        opts = dict(cache=cache, error_model="numpy", inline="always" if inline else "never")
        if fn is None:
            return lambda f: numba.njit(**opts)(f)
        return numba.njit(**opts)(fn)

else:

    def jit(fn=None, *, cache=True, inline=False):
        if fn is None:
            return lambda f: f
        return fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
