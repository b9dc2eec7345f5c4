"""Hot-kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``EPRSIM_KERNELS=python`` to force the numpy fallback.
"""
import os

from eprsim import _pykernels

python_kernels = _pykernels

try:
    if os.environ.get("EPRSIM_KERNELS", "").lower() == "python":
        raise ImportError("python kernels requested")
    from eprsim import _ckernels as _impl

    BACKEND = "cython"
    compiled_kernels = _impl
except ImportError:
    _impl = _pykernels
    BACKEND = "python"
    compiled_kernels = None

color_bins = _impl.color_bins
lag_products = _impl.lag_products
window_project = _impl.window_project
servo_track = _impl.servo_track

__all__ = [
    "BACKEND",
    "color_bins",
    "compiled_kernels",
    "lag_products",
    "python_kernels",
    "servo_track",
    "window_project",
]
