"""Kernel backend selection.

The hot inner loops (uniform quantization, step-size SSE search) exist
twice: a compiled Cython module ``_qcore`` and a pure-numpy fallback in
:mod:`qdnn_lab.kernels.reference`.  The compiled module is used when it
imported cleanly; set ``QDNN_LAB_KERNELS=python`` or ``=cython`` to force a
backend (``cython`` raises if the extension is missing).

Dense-layer matrix products are not kernels here on purpose: numpy already
runs them through BLAS in both backends.
"""

from __future__ import annotations

import os

import numpy as np

from . import reference

try:
    from . import _qcore
except ImportError:  # extension not built; fallback stays available
    _qcore = None

__all__ = ["BACKEND", "quantize", "step_size_search_sorted", "backends"]


def _select() -> str:
    choice = os.environ.get("QDNN_LAB_KERNELS", "auto")
    if choice not in ("auto", "python", "cython"):
        raise ValueError(f"QDNN_LAB_KERNELS must be auto|python|cython, got {choice!r}")
    if choice == "python":
        return "python"
    if _qcore is None:
        if choice == "cython":
            raise ImportError("QDNN_LAB_KERNELS=cython but qdnn_lab.kernels._qcore is not built")
        return "python"
    return "cython"


BACKEND = _select()


def _quantize_compiled(x, delta, lo, hi):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(arr.size)
    _qcore.quantize(arr.ravel(), delta, lo, hi, out)
    return out.reshape(arr.shape)


if BACKEND == "cython":
    quantize = _quantize_compiled
    step_size_search_sorted = _qcore.step_size_search_sorted
else:
    quantize = reference.quantize
    step_size_search_sorted = reference.step_size_search_sorted


def backends() -> dict:
    """Map of backend name -> (quantize, step_size_search_sorted); for tests/benchmarks."""
    table = {"python": (reference.quantize, reference.step_size_search_sorted)}
    if _qcore is not None:
        table["cython"] = (_quantize_compiled, _qcore.step_size_search_sorted)
    return table
