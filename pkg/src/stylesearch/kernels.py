"""Kernel backend selection.

The compiled extension (`stylesearch._hotkernels`, Cython) is preferred;
the pure-numpy twin (`stylesearch._slowkernels`) is used when the
extension is not built. Override with STYLESEARCH_KERNELS=compiled|numpy,
e.g. for the cross-check tests and `python -m stylesearch.bench`.
"""

from __future__ import annotations

import os

from stylesearch import _slowkernels

try:
    from stylesearch import _hotkernels
except ImportError:  # extension not built
    _hotkernels = None

_FORCED = os.environ.get("STYLESEARCH_KERNELS", "").strip().lower()
if _FORCED == "numpy":
    _impl = _slowkernels
elif _FORCED == "compiled":
    if _hotkernels is None:
        raise ImportError(
            "STYLESEARCH_KERNELS=compiled but the extension is not built; "
            "run `pip install -e .` or `python setup.py build_ext --inplace`"
        )
    _impl = _hotkernels
elif _FORCED:
    raise ValueError(f"unknown STYLESEARCH_KERNELS value: {_FORCED!r}")
else:
    _impl = _hotkernels if _hotkernels is not None else _slowkernels

HAVE_COMPILED = _hotkernels is not None
BACKEND = "compiled" if _impl is not _slowkernels else "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
avgpool2_forward = _impl.avgpool2_forward
upsample_forward = _impl.upsample_forward
upsample_backward = _impl.upsample_backward
jacobi_sweep = _impl.jacobi_sweep


def backends():
    """Both backends as {name: module}, for benchmarks and cross-checks."""
    out = {"numpy": _slowkernels}
    if _hotkernels is not None:
        out["compiled"] = _hotkernels
    return out
