"""Backend selection for the transport kernels.

The compiled extension is used when importable; set ``KINDG_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

_ext = None
if os.environ.get("KINDG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _ext
    except ImportError:  # extension not built
        _ext = None

_impl = _ext if _ext is not None else _kernels_py
BACKEND = _impl.BACKEND


def available_backends():
    return ("cython", "python") if _ext is not None else ("python",)


def get_backend(name=None):
    """Kernel module by name; ``None`` gives the active default."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _ext is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return _ext
    raise ValueError(f"unknown kernel backend {name!r}")


def volume_residual(st, F, alpha, R):
    return _impl.volume_residual(st, F, alpha, R)


def block_solve(st, R, beta, F, cache=None):
    return _impl.block_solve(st, R, beta, F, cache)
