"""Inexact proximal block coordinate descent on the penalised energy.

Each block update minimises <X, G_i> + sigma/2 |X - X_i|^2 over S, which is
the projection of X_i - G_i / sigma onto S because the penalised energy is
linear in every single block.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import ProblemData, apply_B, block_gradient, comp_violation, energy
from .projection import DualState, ProjectionError, project_onto_S

logger = logging.getLogger(__name__)


def eps_outer_for(K: int) -> float:
    """Outer stopping threshold for a mesh with K elements."""
    if K <= 200:
        return 1e-8
    if K <= 2000:
        return 1e-6
    if K <= 10000:
        return 1e-5
    return 1e-4


@dataclass
class PbcdConfig:
    sigma: float = 1e-3
    eps_outer: float | None = None      # None: chosen from K
    eps_inner: float = 1e-9
    max_sweeps: int = 1_000_000
    energy_stall_tol: float = 1e-8
    max_newton: int = 100_000

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if self.eps_outer is not None and not self.eps_outer > 0.0:
            raise ValueError("eps_outer must be positive")
        if not (self.eps_inner > 0.0 and self.energy_stall_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


@dataclass
class SolveReport:
    energies: list = field(default_factory=list)
    penalized: list = field(default_factory=list)
    comp: list = field(default_factory=list)
    feasibility: list = field(default_factory=list)
    kkt_violations: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    sweeps: int = 0
    termination: str = ""
    wall_time: float = 0.0
    newton_iters: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def trace_rows(self):
        for k in range(self.sweeps):
            yield (k + 1, self.energies[k], self.penalized[k], self.comp[k],
                   self.feasibility[k], self.kkt_violations[k], self.times[k])


class BlockProjectionError(RuntimeError):
    def __init__(self, block: int, cause: ProjectionError):
        super().__init__(f"projection failed in block {block}: {cause}")
        self.block = block
        self.residual = cause.residual


def feasibility(Z: np.ndarray, pdata: ProblemData) -> float:
    """sum_i |B(X_i) - b|_2."""
    return float(sum(np.linalg.norm(apply_B(X, pdata) - pdata.b) for X in Z))


def kkt_violation(Z_prev: np.ndarray, Z_curr: np.ndarray, pdata: ProblemData, sigma: float) -> float:
    """Surrogate stationarity measure comparing two consecutive sweeps."""
    dZ = Z_prev - Z_curr
    w = pdata.wmass[:, None]
    # coupling of block j back onto earlier blocks, accumulated from the end
    coupling = [w * (dZ[j] @ pdata.M) + pdata.beta * dZ[j] for j in range(len(Z_curr))]
    total = 0.0
    tail = np.zeros_like(Z_curr[0])
    for i in range(len(Z_curr) - 1, -1, -1):
        total += float(np.linalg.norm(tail - sigma * dZ[i]))
        tail = tail + coupling[i]
    return total


def pbcd_sweep(Z: np.ndarray, pdata: ProblemData, cfg: PbcdConfig,
               duals: list[DualState | None]) -> np.ndarray:
    """One Gauss-Seidel pass over the blocks; ``duals`` is updated in place."""
    Z = np.array(Z, dtype=float, copy=True)
    for i in range(len(Z)):
        G = block_gradient(Z, i, pdata)
        Y = Z[i] - G / cfg.sigma
        try:
            Z[i], duals[i] = project_onto_S(Y, pdata, cfg.eps_inner, warm=duals[i], max_iter=cfg.max_newton)
        except ProjectionError as exc:
            raise BlockProjectionError(i, exc) from exc
    return Z


def pbcd_solve(pdata: ProblemData, Z0: np.ndarray, cfg: PbcdConfig | None = None,
               duals: list[DualState | None] | None = None) -> tuple[np.ndarray, SolveReport]:
    """Run sweeps until the scaled iterate gap or the energy change is small."""
    cfg = cfg or PbcdConfig()
    eps_outer = cfg.eps_outer if cfg.eps_outer is not None else eps_outer_for(pdata.K)
    Z = np.array(Z0, dtype=float, copy=True)
    if Z.ndim != 3 or Z.shape[1:] != (pdata.K, pdata.K) or Z.shape[0] != pdata.N - 1:
        raise ValueError(f"expected plans of shape ({pdata.N - 1}, {pdata.K}, {pdata.K})")
    duals = list(duals) if duals is not None else [None] * len(Z)
    report = SolveReport()
    start = time.perf_counter()
    f_prev = None
    sqrt_sigma = math.sqrt(cfg.sigma)
    best = None
    for k in range(cfg.max_sweeps):
        try:
            Z_new = pbcd_sweep(Z, pdata, cfg, duals)
        except BlockProjectionError:
            report.termination = "projection_failure"
            report.wall_time = time.perf_counter() - start
            raise
        f = energy(Z_new, pdata)
        cv = comp_violation(Z_new)
        fb = f + pdata.beta * cv
        step = sqrt_sigma * float(np.linalg.norm(Z_new - Z))
        report.energies.append(f)
        report.penalized.append(fb)
        report.comp.append(cv)
        report.feasibility.append(feasibility(Z_new, pdata))
        report.kkt_violations.append(kkt_violation(Z, Z_new, pdata, cfg.sigma))
        report.steps.append(step)
        report.times.append(time.perf_counter() - start)
        report.sweeps = k + 1
        report.newton_iters += sum(d.newton_iters for d in duals)
        Z = Z_new
        if best is None or fb < best[0]:
            best = (fb, Z)
        if step < eps_outer:
            report.termination = "iterate_gap"
            break
        if f_prev is not None and abs(fb - f_prev) < cfg.energy_stall_tol:
            report.termination = "energy_stall"
            break
        f_prev = fb
    else:
        report.termination = "max_sweeps"
        logger.warning("PBCD hit the sweep budget (%d); returning the best iterate", cfg.max_sweeps)
        Z = best[1]
    report.wall_time = time.perf_counter() - start
    return Z, report
