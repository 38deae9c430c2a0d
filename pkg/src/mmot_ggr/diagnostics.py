"""Transport maps, 1D reference maps, error metrics and KKT certificates."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .assembly import ProblemData, apply_B, apply_B_adjoint, block_gradient
from .densities import DegenerateDensityError, DensitySpec
from .mesh import Mesh
from .pbcd import feasibility

__all__ = [
    "MapTable", "transport_maps", "SeidlMaps", "seidl_maps_1d", "avg_error", "match_branches",
    "KktReport", "kkt_certificate", "feasibility", "write_maps_csv", "write_trace_csv", "write_slice_csv",
]


@dataclass
class MapTable:
    """``images[i, j]`` is the image of barycenter ``points[j]`` under block i."""
    points: np.ndarray          # (K, d)
    images: np.ndarray          # (N-1, K, d); NaN on rows without mass
    undefined: np.ndarray       # (N-1, K) bool


def transport_maps(Z: np.ndarray, mesh: Mesh) -> MapTable:
    """Barycentric row averages T(a_j) = sum_k a_k x_jk / sum_l x_jl."""
    a = mesh.barycenters
    Z = np.asarray(Z, dtype=float)
    rows = Z.sum(axis=2)
    undefined = ~(rows > 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        images = (Z @ a) / rows[..., None]
    images[undefined] = np.nan
    return MapTable(points=a, images=images, undefined=undefined)


class SeidlMaps:
    """Co-motion maps of a 1D marginal: T_i(x) = F^-1(F(x) + i - 1 mod N).

    F is the cumulative mass. It is tabulated on Gauss panels so that both F
    and its inverse are accurate to rounding.
    """

    def __init__(self, spec: DensitySpec, panels: int = 512, order: int = 20):
        if spec.dimension != 1:
            raise ValueError("reference maps exist only for 1D marginals")
        (lo, hi), = spec.domain
        edges = np.linspace(lo, hi, panels + 1)
        if lo < 0.0 < hi:
            edges = np.unique(np.append(edges, 0.0))
        self.spec = spec
        self.N = spec.electron_count
        self.edges = edges
        x, w = np.polynomial.legendre.leggauss(order)
        self._x, self._w = 0.5 * (x + 1.0), 0.5 * w
        masses = self._panel(edges[:-1], edges[1:])
        self.cdf_edges = np.concatenate([[0.0], np.cumsum(masses)])
        self.total = float(self.cdf_edges[-1])
        if not np.all(masses > 0.0):
            raise DegenerateDensityError("density vanishes on a panel; the CDF cannot be inverted")

    def _panel(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        pts = a[..., None] + (b - a)[..., None] * self._x
        return (b - a) * (self.spec(pts) @ self._w)

    def cdf(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.edges[0], self.edges[-1])
        idx = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.edges) - 2)
        return self.cdf_edges[idx] + self._panel(self.edges[idx], x)

    def inverse_cdf(self, m) -> np.ndarray:
        m = np.clip(np.asarray(m, dtype=float), 0.0, self.total)
        idx = np.clip(np.searchsorted(self.cdf_edges, m, side="right") - 1, 0, len(self.edges) - 2)
        lo, hi = self.edges[idx].copy(), self.edges[idx + 1].copy()
        # bisection within the bracketing panel, then safeguarded Newton steps
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < m
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x = 0.5 * (lo + hi)
        for _ in range(4):
            dens = self.spec(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = (self.cdf(x) - m) / dens
            x = np.where(np.isfinite(step), np.clip(x - step, lo, hi), x)
        return x

    def shift(self, i: int) -> float:
        """Mass offset of branch i (i = 2..N) in units of the total mass."""
        return (i - 1) * self.total / self.N

    def __call__(self, i: int, x) -> np.ndarray:
        if not 2 <= i <= self.N:
            raise ValueError(f"branch index must lie in [2, {self.N}]")
        target = np.mod(self.cdf(x) + self.shift(i), self.total)
        return self.inverse_cdf(target)

    def all(self, x) -> np.ndarray:
        """Images under T_2..T_N, shape (N-1, len(x))."""
        return np.stack([self(i, x) for i in range(2, self.N + 1)])


def seidl_maps_1d(spec: DensitySpec) -> SeidlMaps:
    return SeidlMaps(spec)


def match_branches(maps: MapTable, oracle: SeidlMaps) -> tuple[np.ndarray, np.ndarray]:
    """Assign computed blocks to oracle branches separately at every barycenter.

    Electrons are indistinguishable, so the block labels of an optimal plan
    are only defined up to a relabelling per row; each row gets the
    assignment with the smallest summed error. Returns ``perm`` of shape
    (K, N-1), where block b at row j is compared with branch ``perm[j, b] + 2``,
    and the matched absolute errors of the same shape (0 on rows without mass).
    """
    x = maps.points[:, 0]
    ref = oracle.all(x).T                     # (K, N-1)
    comp = maps.images[..., 0].T              # (K, N-1)
    n = ref.shape[1]
    perm = np.tile(np.arange(n), (len(x), 1))
    err = np.zeros_like(ref)
    for j in range(len(x)):
        c = comp[j]
        if np.all(np.isnan(c)):
            continue
        cost = np.abs(c[:, None] - ref[j][None, :])
        cost[np.isnan(cost)] = 0.0
        rows, cols = linear_sum_assignment(cost)
        perm[j, rows] = cols
        err[j, rows] = cost[rows, cols]
    return perm, err


def avg_error(maps: MapTable, oracle: SeidlMaps, mesh: Mesh) -> float:
    """(1 / (K |Omega|)) * sum over branches and barycenters of |T - T^K|."""
    _, err = match_branches(maps, oracle)
    return float(err.sum() / (mesh.K * oracle.spec.volume))


@dataclass
class KktReport:
    stationarity: float
    complementarity: float
    feasibility: float
    multipliers: list

    @property
    def residual(self) -> float:
        return max(self.stationarity, self.complementarity, self.feasibility)

    def to_dict(self) -> dict:
        return {"stationarity": self.stationarity, "complementarity": self.complementarity,
                "feasibility": self.feasibility, "residual": self.residual}


def _fit_multipliers(G: np.ndarray, support: np.ndarray, pdata: ProblemData) -> tuple[np.ndarray, float]:
    """Multipliers minimising the worst KKT violation of Phi = G - B*(lam).

    Solves the LP  min t  s.t. |Phi| <= t on the support and -Phi <= t off it.
    Returns lam and the optimal t.
    """
    K = pdata.K
    e, w = pdata.vol, pdata.wmass
    j, k = np.indices((K, K))
    j, k, g, sup = j.ravel(), k.ravel(), G.ravel(), support.ravel()
    n = K * K
    # Phi_jk = g_jk - lam1_j e_k - w_j lam2_k - [j == k] lam3
    rows = np.concatenate([np.arange(n)] * 3)
    cols = np.concatenate([j, K + k, np.full(n, 2 * K)])
    vals = np.concatenate([e[k], w[j], (j == k).astype(float)])
    keep = vals != 0.0
    Bt = sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, 2 * K + 1))
    ones = sparse.csr_matrix(np.ones((n, 1)))
    # -Phi <= t  ->   B*lam - t <= g        (every entry)
    #  Phi <= t  ->  -B*lam - t <= -g       (support entries)
    idx = np.flatnonzero(sup)
    A = sparse.vstack([sparse.hstack([Bt, -ones]), sparse.hstack([-Bt[idx], -ones[idx]])]).tocsr()
    rhs = np.concatenate([g, -g[idx]])
    c = np.zeros(2 * K + 2)
    c[-1] = 1.0
    res = linprog(c, A_ub=A, b_ub=rhs, bounds=[(None, None)] * (2 * K + 1) + [(0.0, None)], method="highs")
    if not res.success:
        raise RuntimeError(f"multiplier fit failed: {res.message}")
    return res.x[:-1], float(res.x[-1])


def kkt_certificate(Z: np.ndarray, pdata: ProblemData, tol: float = 1e-8) -> KktReport:
    """First-order certificate for min f_beta over S^(N-1).

    For each block the equality multipliers are chosen to minimise the worst
    violation of: Phi = grad_i f_beta - B*(lam) vanishes on the support and is
    nonnegative off it. ``tol`` is the support threshold relative to the
    largest entry. Stationarity is the largest violation over all blocks.
    """
    Z = np.asarray(Z, dtype=float)
    stat = comp = 0.0
    lams = []
    for i in range(len(Z)):
        X = Z[i]
        G = block_gradient(Z, i, pdata)
        support = X > tol * max(1.0, float(X.max()))
        lam, t = _fit_multipliers(G, support, pdata)
        Phi = G - apply_B_adjoint(lam, pdata)
        stat = max(stat, t)
        comp = max(comp, float(np.abs(Phi * X).max()))
        lams.append(lam)
    return KktReport(stationarity=stat, complementarity=comp, feasibility=feasibility(Z, pdata), multipliers=lams)


# ------------------------------------------------------------------- output


def write_maps_csv(path, maps: MapTable) -> None:
    d = maps.points.shape[1]
    axes = "xyz"[:d]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["block", "row"] + [f"a_{c}" for c in axes] + [f"T_{c}" for c in axes])
        for b in range(maps.images.shape[0]):
            for j in range(maps.images.shape[1]):
                out.writerow([b + 2, j] + [f"{v:.12g}" for v in maps.points[j]]
                             + [f"{v:.12g}" for v in maps.images[b, j]])


def write_trace_csv(path, reports) -> None:
    """Per-sweep traces of one or more solves; ``reports`` maps level -> SolveReport."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["level", "sweep", "f", "f_beta", "comp_violation", "feas", "kkt", "time"])
        for level, rep in reports.items():
            for row in rep.trace_rows():
                out.writerow([level] + [f"{v:.12g}" if isinstance(v, float) else v for v in row])


def write_slice_csv(path, maps: MapTable, region: np.ndarray) -> None:
    """Pre-image points of a region and their images under every block, for 2D plots."""
    region = np.asarray(region)
    idx = np.flatnonzero(region) if region.dtype == bool else region
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["set", "element", "x", "y"])
        for j in idx:
            out.writerow(["omega", int(j)] + [f"{v:.12g}" for v in maps.points[j]])
        for b in range(maps.images.shape[0]):
            for j in idx:
                out.writerow([f"T{b + 2}", int(j)] + [f"{v:.12g}" for v in maps.images[b, j]])
