"""Random multistart over feasible plans, each start polished by PBCD."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import ProblemData, comp_violation
from .pbcd import BlockProjectionError, PbcdConfig, SolveReport, pbcd_solve
from .projection import ProjectionError, project_onto_S

logger = logging.getLogger(__name__)


@dataclass
class MultistartConfig:
    n_starts: int = 200
    seed: int = 0
    pbcd: PbcdConfig = field(default_factory=PbcdConfig)
    keep_top: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.keep_top < 1:
            raise ValueError("keep_top must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class StartResult:
    index: int
    penalized: float
    comp: float
    Z: np.ndarray | None
    report: SolveReport | None
    error: str | None = None

    def key(self):
        return (self.penalized, self.comp, self.index)


class MultistartError(RuntimeError):
    pass


def random_feasible_start(pdata: ProblemData, rng: np.random.Generator,
                          eps_inner: float = 1e-9) -> np.ndarray:
    """Uniform [0, 1] entries with a zero diagonal, projected block by block onto S."""
    K = pdata.K
    blocks = []
    for _ in range(pdata.N - 1):
        Y = rng.uniform(0.0, 1.0, size=(K, K))
        np.fill_diagonal(Y, 0.0)
        blocks.append(project_onto_S(Y, pdata, eps_inner)[0])
    return np.stack(blocks)


def start_streams(seed: int, n: int) -> list[np.random.Generator]:
    """Independent generators, one per start, derived from a master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _run_start(index: int, rng: np.random.Generator, pdata: ProblemData, cfg: PbcdConfig) -> StartResult:
    try:
        Z0 = random_feasible_start(pdata, rng, cfg.eps_inner)
        Z, report = pbcd_solve(pdata, Z0, cfg)
    except (ProjectionError, BlockProjectionError) as exc:
        logger.warning("start %d failed: %s", index, exc)
        return StartResult(index, np.inf, np.inf, None, None, str(exc))
    return StartResult(index, report.penalized[-1], comp_violation(Z), Z, report)


def multistart_solve(pdata: ProblemData, cfg: MultistartConfig | None = None
                     ) -> tuple[np.ndarray, list[StartResult]]:
    """Best plan over ``n_starts`` PBCD runs and all per-start results.

    The winner minimises the penalised energy; ties go to the smaller
    complementarity violation, then to the lower start index. Results are
    identical for any thread count.
    """
    cfg = cfg or MultistartConfig()
    rngs = start_streams(cfg.seed, cfg.n_starts)
    if cfg.threads == 1:
        results = [_run_start(i, g, pdata, cfg.pbcd) for i, g in enumerate(rngs)]
    else:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(lambda a: _run_start(a[0], a[1], pdata, cfg.pbcd), enumerate(rngs)))
    ok = [res for res in results if res.Z is not None]
    if not ok:
        raise MultistartError(f"all {cfg.n_starts} starts failed; first error: {results[0].error}")
    ranked = sorted(ok, key=StartResult.key)
    # drop plans beyond keep_top to bound memory on large runs
    for res in ranked[cfg.keep_top:]:
        res.Z = None
    logger.info("multistart: best f_beta %.6f from start %d of %d", ranked[0].penalized, ranked[0].index, cfg.n_starts)
    return ranked[0].Z, results
