"""Kernel dispatch: compiled extension when available, pure backend otherwise.

Set ``STSSL_PURE_KERNELS=1`` to force the pure backend (used by the
benchmark and by the equivalence tests).
"""

import importlib
import os

import numpy as np

from . import pure

_core = None
if os.environ.get("STSSL_PURE_KERNELS", "") != "1":
    try:
        _core = importlib.import_module("stssl._kernels._core")
    except ImportError:
        _core = None

HAVE_COMPILED = _core is not None

NOISE = pure.NOISE


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "pure"


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Cluster labels per point; -1 marks noise."""
    if _core is not None:
        try:
            return _core.dbscan_labels(points, eps, min_pts)
        except OverflowError:
            # Degenerate coordinate extents overflow the grid index.
            pass
    return pure.dbscan_labels(points, eps, min_pts)


def solve_lsap(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-cost assignment as (row_indices, col_indices) covering min(R, C)."""
    if _core is not None:
        return _core.solve_lsap(cost)
    return pure.solve_lsap(cost)
