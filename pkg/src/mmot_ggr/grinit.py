"""Lift a coarse transport plan onto a refined mesh by copying its support."""

from __future__ import annotations

import numpy as np

from .mesh import RefinementMap

SUPPORT_THRESHOLD = 1e-8


def gr_init(Z_coarse: np.ndarray, rmap: RefinementMap, r: float = 1.0,
            threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
    """Fine plans whose entry (a, b) is r * x_jk when a is a child of j and b of k.

    Only coarse entries above ``threshold`` are lifted; the result is generally
    infeasible and is meant as a starting point for a projection-based solver.
    """
    if not r > 0.0:
        raise ValueError("scaling factor r must be positive")
    Z_coarse = np.asarray(Z_coarse, dtype=float)
    K = len(rmap.children)
    if Z_coarse.ndim != 3 or Z_coarse.shape[1:] != (K, K):
        raise ValueError(f"coarse plans have shape {Z_coarse.shape}, refinement map expects K={K}")
    # parent index of every fine element, then a gather does the lifting
    parent = rmap.parent_of()
    mask = Z_coarse > threshold
    lifted = np.where(mask, r * Z_coarse, 0.0)
    return lifted[:, parent[:, None], parent[None, :]]
