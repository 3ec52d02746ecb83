"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy versions in ``_kernels_py`` are used. Set ``RFSENSE_PURE_PYTHON=1`` to
force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("RFSENSE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

iou_matrix = _impl.iou_matrix
nms_sorted = _impl.nms_sorted
energy_scan = _impl.energy_scan
roi_bins = _impl.roi_bins
roi_pool_forward = _impl.roi_pool_forward
roi_pool_backward = _impl.roi_pool_backward
greedy_match = _impl.greedy_match

__all__ = [
    "BACKEND",
    "iou_matrix",
    "nms_sorted",
    "energy_scan",
    "roi_bins",
    "roi_pool_forward",
    "roi_pool_backward",
    "greedy_match",
]
