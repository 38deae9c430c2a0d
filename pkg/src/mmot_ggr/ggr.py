"""Coarse-to-fine pipeline: global multistart on a coarse mesh, then repeated
refine / lift / PBCD passes with penalty and tolerances chosen per mesh size.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import ProblemData, assemble, comp_violation, energy
from .densities import DensitySpec
from .diagnostics import avg_error, kkt_certificate, seidl_maps_1d, transport_maps
from .grinit import SUPPORT_THRESHOLD, gr_init
from .mesh import Mesh, build_quadtree_mesh_2d, partition_equal_mass_1d, refine
from .multistart import MultistartConfig, multistart_solve
from .pbcd import PbcdConfig, SolveReport, eps_outer_for, feasibility, pbcd_solve

logger = logging.getLogger(__name__)

__all__ = ["beta_for", "eps_outer_for", "GgrConfig", "LevelResult", "GgrResult", "GgrError", "ggr_run"]

_BETA_TABLE = ((10, 4.0), (36, 2.0), (80, 1.0), (160, 2.0 ** -2), (320, 2.0 ** -3), (640, 2.0 ** -4),
               (1280, 2.0 ** -5), (2560, 2.0 ** -6), (5120, 2.0 ** -7))


def beta_for(K: int) -> float:
    """Penalty parameter for a mesh with K elements."""
    if K < 1:
        raise ValueError("K must be positive")
    for bound, beta in _BETA_TABLE:
        if K < bound:
            return beta
    return 2.0 ** -8


@dataclass
class GgrConfig:
    spec: DensitySpec
    K0: int
    levels: int = 4
    multistart: MultistartConfig = field(default_factory=MultistartConfig)
    pbcd: PbcdConfig = field(default_factory=PbcdConfig)
    r: float = 1.0
    support_threshold: float = SUPPORT_THRESHOLD
    coarse_cost: str = "point"       # cost rule on the coarse mesh
    cost: str = "integral"           # cost rule on refined meshes
    split: str = "geometric"         # 1D refinement: "geometric" halves or equal-"mass" halves
    # per-level overrides, keyed by level index (0 is the coarse mesh)
    beta: dict = field(default_factory=dict)
    sigma: dict = field(default_factory=dict)
    eps_outer: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.levels < 0:
            raise ValueError("levels must be >= 0")
        if self.K0 < 2:
            raise ValueError("K0 must be >= 2")
        if not self.r > 0.0:
            raise ValueError("r must be positive")
        if self.split not in ("geometric", "mass"):
            raise ValueError("split must be 'geometric' or 'mass'")
        for name in ("beta", "sigma", "eps_outer"):
            table = {int(k): float(v) for k, v in getattr(self, name).items()}
            if any(not v > 0.0 for v in table.values()):
                raise ValueError(f"{name} overrides must be positive")
            setattr(self, name, table)

    def level_params(self, level: int, K: int) -> tuple[float, PbcdConfig]:
        beta = self.beta.get(level, beta_for(K))
        pbcd = replace(self.pbcd, sigma=self.sigma.get(level, self.pbcd.sigma),
                       eps_outer=self.eps_outer.get(level, self.pbcd.eps_outer or eps_outer_for(K)))
        return beta, pbcd


@dataclass
class LevelResult:
    level: int
    K: int
    beta: float
    sigma: float
    eps_outer: float
    energy: float
    penalized: float
    comp: float
    feas: float
    kkt: float
    err_s: float | None
    err_e: float | None
    sweeps: int
    termination: str
    winner: int | None = None        # multistart start index on level 0
    time: float = 0.0

    def to_dict(self, timings: bool = True) -> dict:
        out = asdict(self)
        if not timings:
            out.pop("time")
        return out


@dataclass
class GgrResult:
    plans: list = field(default_factory=list)        # one PlanSet per level
    meshes: list = field(default_factory=list)
    levels: list = field(default_factory=list)       # LevelResult per level
    reports: list = field(default_factory=list)      # SolveReport per level (winner's on level 0)

    @property
    def Z(self) -> np.ndarray:
        return self.plans[-1]


class GgrError(RuntimeError):
    def __init__(self, msg: str, partial: GgrResult):
        super().__init__(msg)
        self.partial = partial


def initial_mesh(spec: DensitySpec, K0: int) -> Mesh:
    if spec.dimension == 1:
        return partition_equal_mass_1d(spec, K0)
    return build_quadtree_mesh_2d(spec, K0)


def _error(Z, mesh, oracle):
    if oracle is None:
        return None
    return avg_error(transport_maps(Z, mesh), oracle, mesh)


def _summarise(level, Z, pdata, pbcd, report, err_s, err_e, elapsed, winner=None) -> LevelResult:
    f = energy(Z, pdata)
    cv = comp_violation(Z)
    return LevelResult(
        level=level, K=pdata.K, beta=pdata.beta, sigma=pbcd.sigma, eps_outer=pbcd.eps_outer,
        energy=f, penalized=f + pdata.beta * cv, comp=cv, feas=feasibility(Z, pdata),
        kkt=kkt_certificate(Z, pdata).residual, err_s=err_s, err_e=err_e,
        sweeps=report.sweeps, termination=report.termination, winner=winner, time=elapsed)


# ----------------------------------------------------------- checkpoints


def _level_dir(root: Path, level: int) -> Path:
    return root / f"level_{level}"


def save_level(root, level: int, mesh: Mesh, Z: np.ndarray, result: LevelResult, report: SolveReport) -> None:
    d = _level_dir(Path(root), level)
    d.mkdir(parents=True, exist_ok=True)
    (d / "mesh.json").write_text(mesh.to_json())
    with open(d / "plan.bin", "wb") as fh:
        np.save(fh, Z)
    payload = {"level": result.to_dict(timings=False), "trace": report.to_dict()}
    # report.json is written last and marks the level as complete
    (d / "report.json").write_text(json.dumps(payload))
    (d / "timing.json").write_text(json.dumps({"time": result.time, "wall": report.wall_time}))


def load_level(root, level: int) -> tuple[Mesh, np.ndarray, LevelResult, SolveReport] | None:
    d = _level_dir(Path(root), level)
    if not (d / "report.json").exists():
        return None
    mesh = Mesh.from_json((d / "mesh.json").read_text())
    with open(d / "plan.bin", "rb") as fh:
        Z = np.load(fh)
    payload = json.loads((d / "report.json").read_text())
    timing = json.loads((d / "timing.json").read_text()) if (d / "timing.json").exists() else {}
    result = LevelResult(**payload["level"], time=timing.get("time", 0.0))
    report = SolveReport(**payload["trace"])
    return mesh, Z, result, report


# --------------------------------------------------------------- driver


def ggr_run(cfg: GgrConfig, checkpoint=None, resume: bool = False) -> GgrResult:
    """Solve on K0 elements by multistart, then refine ``cfg.levels`` times.

    With ``checkpoint`` every finished level is written to
    ``checkpoint/level_k``; ``resume`` restarts after the last complete level.
    """
    spec = cfg.spec
    oracle = seidl_maps_1d(spec) if spec.dimension == 1 else None
    out = GgrResult()
    start_level = 0
    if resume and checkpoint is not None:
        for level in range(cfg.levels + 1):
            loaded = load_level(checkpoint, level)
            if loaded is None:
                break
            mesh, Z, result, report = loaded
            out.meshes.append(mesh)
            out.plans.append(Z)
            out.levels.append(result)
            out.reports.append(report)
            start_level = level + 1
        if start_level:
            logger.info("resuming after level %d", start_level - 1)

    for level in range(start_level, cfg.levels + 1):
        t0 = time.perf_counter()
        try:
            if level == 0:
                mesh = initial_mesh(spec, cfg.K0)
                beta, pbcd = cfg.level_params(0, mesh.K)
                pdata = assemble(mesh, spec, beta, cfg.coarse_cost)
                ms = replace(cfg.multistart, pbcd=pbcd)
                Z, starts = multistart_solve(pdata, ms)
                best = min((s for s in starts if s.Z is not None), key=lambda s: s.key())
                report, winner, err_s = best.report, best.index, None
            else:
                split_spec = spec if (cfg.split == "mass" and spec.dimension == 1) else None
                mesh, rmap = refine(out.meshes[-1], split_spec)
                beta, pbcd = cfg.level_params(level, mesh.K)
                pdata = assemble(mesh, spec, beta, cfg.cost)
                Z0 = gr_init(out.plans[-1], rmap, cfg.r, cfg.support_threshold)
                err_s = _error(Z0, mesh, oracle)
                Z, report = pbcd_solve(pdata, Z0, pbcd)
                winner = None
        except Exception as exc:
            raise GgrError(f"level {level} failed: {exc}", out) from exc
        result = _summarise(level, Z, pdata, pbcd, report, err_s, _error(Z, mesh, oracle),
                            time.perf_counter() - t0, winner)
        logger.info("level %d: K=%d E=%.6f err_s=%s err_e=%s (%s after %d sweeps)", level, mesh.K,
                    result.energy, result.err_s, result.err_e, result.termination, result.sweeps)
        out.meshes.append(mesh)
        out.plans.append(Z)
        out.levels.append(result)
        out.reports.append(report)
        if checkpoint is not None:
            save_level(checkpoint, level, mesh, Z, result, report)
    return out
