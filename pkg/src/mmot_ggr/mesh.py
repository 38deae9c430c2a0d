"""Equal-mass meshes of intervals and boxes, and their nested refinement.

A mesh is a list of axis-aligned cells (intervals in 1D, rectangles in 2D)
stored as ``lower``/``upper`` corner arrays of shape (K, d).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .densities import DegenerateDensityError, DensitySpec
from .quadrature import _quadrisect, cell_integrals

MASS_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    lower: np.ndarray
    upper: np.ndarray
    level: int = 0
    parent: np.ndarray | None = field(default=None, compare=False)
    depth: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        lower = np.atleast_2d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_2d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise ValueError("lower/upper shape mismatch")
        if np.any(upper <= lower):
            raise ValueError("mesh contains a cell of non-positive size")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def K(self) -> int:
        return self.lower.shape[0]

    @property
    def dimension(self) -> int:
        return self.lower.shape[1]

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    @property
    def barycenters(self) -> np.ndarray:
        """Geometric centres, shape (K, d)."""
        return 0.5 * (self.lower + self.upper)

    @property
    def diameters(self) -> np.ndarray:
        return np.linalg.norm(self.upper - self.lower, axis=1)

    def to_json(self) -> str:
        cells = []
        for k in range(self.K):
            cells.append({
                "id": k,
                "bounds": [[float(lo), float(hi)] for lo, hi in zip(self.lower[k], self.upper[k])],
                "volume": float(self.volumes[k]),
                "barycenter": [float(c) for c in self.barycenters[k]],
                "parent": None if self.parent is None else int(self.parent[k]),
            })
        return json.dumps({"level": self.level, "elements": cells})

    @classmethod
    def from_json(cls, text: str) -> "Mesh":
        data = json.loads(text)
        cells = data["elements"]
        lower = np.array([[b[0] for b in c["bounds"]] for c in cells])
        upper = np.array([[b[1] for b in c["bounds"]] for c in cells])
        parents = [c["parent"] for c in cells]
        parent = None if any(p is None for p in parents) else np.array(parents, dtype=int)
        return cls(lower, upper, level=data["level"], parent=parent)


@dataclass(frozen=True)
class RefinementMap:
    """``children[j]`` lists the fine indices of coarse cell j, in order."""

    children: tuple[tuple[int, ...], ...]
    n_fine: int

    def __post_init__(self):
        flat = sorted(i for ch in self.children for i in ch)
        if flat != list(range(self.n_fine)):
            raise ValueError("child lists must partition the fine index set")

    @property
    def n_coarse(self) -> int:
        return len(self.children)

    def parent_of(self) -> np.ndarray:
        parent = np.empty(self.n_fine, dtype=int)
        for j, ch in enumerate(self.children):
            parent[list(ch)] = j
        return parent


# ---------------------------------------------------------------------- 1D


def _interval_mass(spec: DensitySpec, a: float, b: float) -> float:
    pts = [0.0] if a < 0.0 < b else None
    val, _ = integrate.quad(lambda x: float(spec(np.float64(x))), a, b,
                            epsabs=1e-14, epsrel=1e-13, limit=200, points=pts)
    return val


def _invert_mass(spec: DensitySpec, a: float, b: float, target: float) -> float:
    """Point x in [a, b] with mass(a, x) == target, by bracketed root finding."""
    g = lambda x: _interval_mass(spec, a, x) - target  # noqa: E731
    x = optimize.brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(g(x)) > 1e-10:
        raise DegenerateDensityError(f"CDF inversion failed near x={x:.6g}")
    # a flat CDF at the root means the breakpoint is not determined by the mass
    h = 1e-7 * (b - a)
    if _interval_mass(spec, max(a, x - h), min(b, x + h)) <= 0.0:
        raise DegenerateDensityError(f"density vanishes around x={x:.6g}; breakpoint is not unique")
    return x


def partition_equal_mass_1d(spec: DensitySpec, K: int) -> Mesh:
    """Split the interval into K contiguous cells each carrying mass N/K."""
    if spec.dimension != 1:
        raise ValueError("1D density required")
    if K < 2:
        raise ValueError("K must be >= 2")
    (a, b), = spec.domain
    total = _interval_mass(spec, a, b)
    if total <= 0.0:
        raise DegenerateDensityError("density has no mass")
    share = total / K
    breaks = [a]
    for m in range(1, K):
        lo = breaks[-1]
        # mass of [a, lo] is (m-1)*share up to the root tolerance; invert locally
        done = _interval_mass(spec, a, lo)
        breaks.append(_invert_mass(spec, lo, b, m * share - done))
    breaks.append(b)
    breaks = np.asarray(breaks)
    return Mesh(breaks[:-1, None], breaks[1:, None], level=0)


# ---------------------------------------------------------------------- 2D


def build_quadtree_mesh_2d(spec: DensitySpec, K_target: int, max_depth: int = 14) -> Mesh:
    """Quadtree over the bounding box; cells heavier than N/K_target are split."""
    if spec.dimension != 2:
        raise ValueError("2D density required")
    if K_target < 4:
        raise ValueError("K_target must be >= 4")
    (x0, x1), (y0, y1) = spec.domain
    cap = spec.electron_count / K_target * (1.0 + 1e-9)
    lower = np.array([[x0, y0]])
    upper = np.array([[x1, y1]])
    depth = np.zeros(1, dtype=int)
    leaves_lo, leaves_up, leaves_depth, order = [], [], [], []
    # keys keep leaves in depth-first (Morton) order
    keys = [()]
    for level in range(max_depth + 1):
        mass = cell_integrals(spec, lower, upper)
        split = mass > cap
        if level == max_depth:
            split[:] = False
        leaves_lo.append(lower[~split])
        leaves_up.append(upper[~split])
        leaves_depth.append(depth[~split])
        order.extend(k for k, sp in zip(keys, split) if not sp)
        if not split.any():
            break
        lo, up = lower[split], upper[split]
        lower, upper = _quadrisect(lo, up, 0.5 * (lo + up))
        depth = np.repeat(depth[split] + 1, 4)
        keys = [k + (q,) for k, sp in zip(keys, split) if sp for q in range(4)]
    lo = np.concatenate(leaves_lo)
    up = np.concatenate(leaves_up)
    dp = np.concatenate(leaves_depth)
    perm = sorted(range(len(order)), key=lambda i: order[i])
    return Mesh(lo[perm], up[perm], level=0, depth=dp[perm])


def cell_masses(mesh: Mesh, spec: DensitySpec) -> np.ndarray:
    """Mass of the density on every cell."""
    if mesh.dimension == 1:
        return np.array([_interval_mass(spec, lo, hi) for lo, hi in zip(mesh.lower[:, 0], mesh.upper[:, 0])])
    return cell_integrals(spec, mesh.lower, mesh.upper)


# ---------------------------------------------------------------- refine


def refine(mesh: Mesh, spec: DensitySpec | None = None) -> tuple[Mesh, RefinementMap]:
    """Split every cell: 1D into two halves of equal mass, 2D into four equal quadrants.

    Children of cell j are stored contiguously, so in 1D they are {2j, 2j+1}
    and in 2D {4j, ..., 4j+3}. Without ``spec`` 1D cells are bisected geometrically.
    """
    K = mesh.K
    if mesh.dimension == 1:
        lo, hi = mesh.lower[:, 0], mesh.upper[:, 0]
        if spec is None:
            mid = 0.5 * (lo + hi)
        else:
            mid = np.array([_invert_mass(spec, a, b, 0.5 * _interval_mass(spec, a, b)) for a, b in zip(lo, hi)])
        new_lo = np.column_stack([lo, mid]).reshape(-1, 1)
        new_hi = np.column_stack([mid, hi]).reshape(-1, 1)
        s = 2
    else:
        new_lo, new_hi = _quadrisect(mesh.lower, mesh.upper, mesh.barycenters)
        s = 4
    parent = np.repeat(np.arange(K), s)
    depth = None if mesh.depth is None else np.repeat(mesh.depth + 1, s)
    fine = Mesh(new_lo, new_hi, level=mesh.level + 1, parent=parent, depth=depth)
    rmap = RefinementMap(tuple(tuple(range(s * j, s * j + s)) for j in range(K)), s * K)
    return fine, rmap
