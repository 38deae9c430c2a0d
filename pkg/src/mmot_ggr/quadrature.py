"""Gauss rules on intervals and axis-aligned rectangles."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def cell_integrals(f, lower: np.ndarray, upper: np.ndarray, n: int = 16) -> np.ndarray:
    """Integrate ``f(x, y)`` over each rectangle with an n x n tensor Gauss rule.

    ``lower`` and ``upper`` have shape (M, 2). Returns an array of length M.
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    t, w = gauss_legendre(n)
    h = upper - lower
    out = np.empty(len(lower))
    ww = np.outer(w, w)
    for start in range(0, len(lower), 4096):
        sl = slice(start, start + 4096)
        xs = lower[sl, 0, None] + h[sl, 0, None] * t          # (m, n)
        ys = lower[sl, 1, None] + h[sl, 1, None] * t
        vals = np.asarray(f(xs[:, :, None], ys[:, None, :]), dtype=float)
        vals = np.broadcast_to(vals, (xs.shape[0], n, n))
        out[sl] = np.einsum("mij,ij->m", vals, ww) * h[sl, 0] * h[sl, 1]
    return out


def box_integral(f, xr, yr, tol: float = 1e-12, max_depth: int = 12) -> float:
    """Adaptive integral of ``f(x, y)`` over a rectangle by quadrisection."""
    lower = np.array([[xr[0], yr[0]]], dtype=float)
    upper = np.array([[xr[1], yr[1]]], dtype=float)
    coarse = cell_integrals(f, lower, upper)
    total = 0.0
    for depth in range(max_depth):
        mid = 0.5 * (lower + upper)
        lo_c, up_c = _quadrisect(lower, upper, mid)
        fine = cell_integrals(f, lo_c, up_c).reshape(-1, 4).sum(axis=1)
        done = np.abs(fine - coarse) <= tol * max(1.0, abs(total) + np.abs(fine).sum())
        total += fine[done].sum()
        if done.all():
            return float(total)
        keep = np.repeat(~done, 4)
        lower, upper = lo_c[keep], up_c[keep]
        coarse = cell_integrals(f, lower, upper)
    return float(total + coarse.sum())


def _quadrisect(lower, upper, mid):
    """Children of each rectangle in the order (SW, SE, NW, NE)."""
    x0, y0 = lower[:, 0], lower[:, 1]
    x1, y1 = upper[:, 0], upper[:, 1]
    xm, ym = mid[:, 0], mid[:, 1]
    lo = np.stack([
        np.stack([x0, y0], 1), np.stack([xm, y0], 1),
        np.stack([x0, ym], 1), np.stack([xm, ym], 1)], axis=1).reshape(-1, 2)
    up = np.stack([
        np.stack([xm, ym], 1), np.stack([x1, ym], 1),
        np.stack([xm, y1], 1), np.stack([x1, y1], 1)], axis=1).reshape(-1, 2)
    return lo, up
