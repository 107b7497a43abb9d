"""Kernel backend selection.

The compiled extension is used when it imports; setting
``FORMPHASE_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("FORMPHASE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _pykernels


def get_backend(name=None):
    """Kernel module by name ("compiled" / "python"), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def kalman_loglik_many(series, dt, qp, qv, r, p0, v0, skip=2, backend=None):
    impl = get_backend(backend)
    if impl is _pykernels:
        return _pykernels.kalman_loglik_many(series, dt, qp, qv, r, p0, v0, skip)
    return sum(impl.kalman_loglik(y, dt, qp, qv, r, p0, v0, skip)
               for y in series)


def kalman_smooth(y, dt, qp, qv, r, p0, v0, backend=None):
    return get_backend(backend).kalman_smooth(y, dt, qp, qv, r, p0, v0)


def marching_squares(F, level=0.0, backend=None):
    return get_backend(backend).marching_squares(F, level)
