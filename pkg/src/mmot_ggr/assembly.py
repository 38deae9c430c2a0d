"""Discretised problem data and the penalised pairwise-transport energy.

Plans are stacked as an array ``Z`` of shape (N-1, K, K); ``Z[i]`` is the
transport matrix of electron i+2 relative to the first one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .densities import DensitySpec
from .mesh import Mesh, cell_masses
from .quadrature import gauss_legendre


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Marginal weights, volumes, Coulomb cost and penalty of one mesh level."""

    varrho: np.ndarray
    vol: np.ndarray
    C: np.ndarray
    beta: float
    N: int

    @property
    def K(self) -> int:
        return self.vol.shape[0]

    @cached_property
    def b(self) -> np.ndarray:
        return np.concatenate([np.ones(self.K), self.varrho, [0.0]])

    @cached_property
    def wmass(self) -> np.ndarray:
        """Element masses rho_k |e_k|."""
        return self.varrho * self.vol

    @cached_property
    def M(self) -> np.ndarray:
        """Xi C Xi."""
        return self.vol[:, None] * self.C * self.vol[None, :]

    @cached_property
    def L(self) -> np.ndarray:
        """Lambda Xi C Xi, the gradient of the linear part."""
        return self.varrho[:, None] * self.M

    def with_beta(self, beta: float) -> "ProblemData":
        return ProblemData(self.varrho, self.vol, self.C, float(beta), self.N)

    def save(self, path) -> None:
        np.savez(path, varrho=self.varrho, vol=self.vol, C=self.C, beta=self.beta, N=self.N)

    @classmethod
    def load(cls, path) -> "ProblemData":
        with np.load(path) as f:
            return cls(f["varrho"], f["vol"], f["C"], float(f["beta"]), int(f["N"]))


# ------------------------------------------------------------ cost matrix


def _h1(t):
    """Second antiderivative of 1/|t| (even, vanishing at 0)."""
    t = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0.0, t * np.log(np.where(t > 0.0, t, 1.0)) - t, 0.0)


def _h2(x, y):
    """Fourth antiderivative of 1/|(x, y)|, twice in each variable (even in both)."""
    x = np.abs(x)
    y = np.abs(y)
    r = np.hypot(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(x > 0.0, 0.5 * x * x * y * np.arcsinh(y / np.where(x > 0.0, x, 1.0)), 0.0)
        t2 = np.where(y > 0.0, 0.5 * x * y * y * np.arcsinh(x / np.where(y > 0.0, y, 1.0)), 0.0)
    return t1 + t2 - r ** 3 / 6.0


def _corner_sum(fn, lo1, hi1, lo2, hi2):
    """sum over corner differences with signs for a function of (x - u)."""
    return (fn(hi1 - lo2) - fn(lo1 - lo2) - fn(hi1 - hi2) + fn(lo1 - hi2))


def interval_interaction(lo1, hi1, lo2, hi2):
    """Exact double integral of 1/|x - y| over two disjoint intervals."""
    return _corner_sum(_h1, lo1, hi1, lo2, hi2)


def rectangle_interaction(lo1, hi1, lo2, hi2):
    """Exact integral of 1/|r - r'| over two rectangles with disjoint interiors.

    Arguments are (..., 2) corner arrays.
    """
    dx = [hi1[..., 0] - lo2[..., 0], lo1[..., 0] - lo2[..., 0], hi1[..., 0] - hi2[..., 0], lo1[..., 0] - hi2[..., 0]]
    dy = [hi1[..., 1] - lo2[..., 1], lo1[..., 1] - lo2[..., 1], hi1[..., 1] - hi2[..., 1], lo1[..., 1] - hi2[..., 1]]
    sign = (1.0, -1.0, -1.0, 1.0)
    total = 0.0
    for sx, X in zip(sign, dx):
        for sy, Y in zip(sign, dy):
            total = total + sx * sy * _h2(X, Y)
    return total


def _gauss_interaction_2d(lo1, hi1, lo2, hi2, n):
    t, w = gauss_legendre(n)
    h1 = hi1 - lo1
    h2 = hi2 - lo2
    p1x = lo1[..., 0, None] + h1[..., 0, None] * t
    p1y = lo1[..., 1, None] + h1[..., 1, None] * t
    p2x = lo2[..., 0, None] + h2[..., 0, None] * t
    p2y = lo2[..., 1, None] + h2[..., 1, None] * t
    dx = p1x[..., :, None, None, None] - p2x[..., None, None, :, None]
    dy = p1y[..., None, :, None, None] - p2y[..., None, None, None, :]
    ww = w[:, None, None, None] * w[None, :, None, None] * w[None, None, :, None] * w[None, None, None, :]
    val = (ww / np.hypot(dx, dy)).sum(axis=(-4, -3, -2, -1))
    return val * np.prod(h1, axis=-1) * np.prod(h2, axis=-1)


def cost_coefficient(lo_j, hi_j, lo_k, hi_k) -> float:
    """Average of 1/|r - r'| over two disjoint cells (intervals or rectangles)."""
    lo_j, hi_j, lo_k, hi_k = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (lo_j, hi_j, lo_k, hi_k))
    overlap = np.all((np.minimum(hi_j, hi_k) - np.maximum(lo_j, lo_k)) > 0.0)
    if overlap:
        raise ValueError("cost_coefficient needs cells with disjoint interiors")
    vj = np.prod(hi_j - lo_j)
    vk = np.prod(hi_k - lo_k)
    if lo_j.size == 1:
        return float(interval_interaction(lo_j[0], hi_j[0], lo_k[0], hi_k[0]) / (vj * vk))
    return float(_pair_2d(lo_j[None], hi_j[None], lo_k[None], hi_k[None])[0] / (vj * vk))


# separation (distance / combined diameter) above which Gauss beats the
# cancellation-prone closed form
_FAR_RATIO = 12.0


def _pair_2d(lo1, hi1, lo2, hi2):
    c1 = 0.5 * (lo1 + hi1)
    c2 = 0.5 * (lo2 + hi2)
    diam = np.linalg.norm(hi1 - lo1, axis=-1) + np.linalg.norm(hi2 - lo2, axis=-1)
    far = np.linalg.norm(c1 - c2, axis=-1) > _FAR_RATIO * diam
    out = np.empty(lo1.shape[0])
    near = ~far
    if near.any():
        out[near] = rectangle_interaction(lo1[near], hi1[near], lo2[near], hi2[near])
    if far.any():
        out[far] = _gauss_interaction_2d(lo1[far], hi1[far], lo2[far], hi2[far], 4)
    return out


COST_RULES = ("point", "integral")


def point_cost_matrix(mesh: Mesh) -> np.ndarray:
    """c_jk = 1/|a_j - a_k| between element barycenters, zero diagonal."""
    a = mesh.barycenters
    C = np.zeros((mesh.K, mesh.K))
    for start in range(0, mesh.K, 512):
        rows = slice(start, start + 512)
        C[rows] = np.linalg.norm(a[rows, None, :] - a[None, :, :], axis=-1)
    off = ~np.eye(mesh.K, dtype=bool)
    if np.any(C[off] <= 0.0):
        bad = int(np.argwhere(off & (C <= 0.0))[0, 0])
        raise AssemblyError(f"element {bad} shares its barycenter with another element")
    C[off] = 1.0 / C[off]
    return C


def cost_matrix(mesh: Mesh, rule: str = "integral") -> np.ndarray:
    """Dense symmetric cost matrix with zero diagonal.

    ``rule="point"`` evaluates 1/|r - r'| at barycenters; ``rule="integral"``
    averages it over both elements.
    """
    if rule == "point":
        return point_cost_matrix(mesh)
    if rule != "integral":
        raise ValueError(f"unknown cost rule {rule!r}; expected one of {COST_RULES}")
    K = mesh.K
    vol = mesh.volumes
    C = np.zeros((K, K))
    if mesh.dimension == 1:
        lo, hi = mesh.lower[:, 0], mesh.upper[:, 0]
        for start in range(0, K, 512):
            rows = slice(start, start + 512)
            C[rows] = interval_interaction(lo[rows, None], hi[rows, None], lo[None, :], hi[None, :])
    else:
        iu, ju = np.triu_indices(K, 1)
        vals = np.empty(iu.size)
        for start in range(0, iu.size, 20000):
            s = slice(start, start + 20000)
            vals[s] = _pair_2d(mesh.lower[iu[s]], mesh.upper[iu[s]], mesh.lower[ju[s]], mesh.upper[ju[s]])
        C[iu, ju] = vals
        C[ju, iu] = vals
    np.fill_diagonal(C, 0.0)
    C /= vol[:, None] * vol[None, :]
    C = 0.5 * (C + C.T)
    off = ~np.eye(K, dtype=bool)
    if not np.all(np.isfinite(C)) or np.any(C[off] <= 0.0):
        bad = int(np.argwhere(~np.isfinite(C) | (off & (C <= 0.0)))[0, 0])
        raise AssemblyError(f"cost integral failed for element {bad}")
    return C


def assemble(mesh: Mesh, spec: DensitySpec, beta: float, cost: str = "integral") -> ProblemData:
    """Element-averaged marginal, volumes and Coulomb cost of a mesh."""
    if mesh.dimension != spec.dimension:
        raise ValueError("mesh and density dimensions differ")
    vol = mesh.volumes
    mass = cell_masses(mesh, spec)
    if not np.all(np.isfinite(mass)):
        bad = int(np.argwhere(~np.isfinite(mass))[0, 0])
        raise AssemblyError(f"marginal quadrature failed for element {bad}")
    return ProblemData(varrho=mass / vol, vol=vol, C=cost_matrix(mesh, cost), beta=float(beta), N=spec.electron_count)


# ------------------------------------------------------ constraint operator


def apply_B(W: np.ndarray, pdata: ProblemData) -> np.ndarray:
    """B(W) = [W e ; W^T Xi rho ; tr W]."""
    return np.concatenate([W @ pdata.vol, pdata.wmass @ W, [np.trace(W)]])


def apply_B_adjoint(lam: np.ndarray, pdata: ProblemData) -> np.ndarray:
    K = pdata.K
    l1, l2, l3 = lam[:K], lam[K:2 * K], lam[2 * K]
    out = np.outer(l1, pdata.vol) + np.outer(pdata.wmass, l2)
    out[np.diag_indices(K)] += l3
    return out


# -------------------------------------------------------------- objective


def energy(Z: np.ndarray, pdata: ProblemData) -> float:
    """Repulsive energy f: linear part plus all pairwise block couplings."""
    Z = np.asarray(Z)
    lin = float(np.sum(Z.sum(axis=0) * pdata.L))
    quad = 0.0
    w = pdata.wmass[:, None]
    for i in range(len(Z)):
        for j in range(i + 1, len(Z)):
            quad += float(np.sum(Z[i] * (w * (Z[j] @ pdata.M))))
    return lin + quad


def comp_violation(Z: np.ndarray) -> float:
    """sum_{i<j} <X_i, X_j>."""
    Z = np.asarray(Z)
    return float(sum(np.sum(Z[i] * Z[j]) for i in range(len(Z)) for j in range(i + 1, len(Z))))


def penalized_energy(Z: np.ndarray, pdata: ProblemData) -> float:
    return energy(Z, pdata) + pdata.beta * comp_violation(Z)


def block_gradient(Z: np.ndarray, i: int, pdata: ProblemData) -> np.ndarray:
    """Gradient of the penalised energy in block ``i`` (0-based over Z).

    The caller decides which copies of the other blocks Z holds.
    """
    others = Z.sum(axis=0) - Z[i]
    return pdata.L + pdata.wmass[:, None] * (others @ pdata.M) + pdata.beta * others
