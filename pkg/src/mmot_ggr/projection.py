"""Euclidean projection onto the transport polytope S.

S = {W : W e = 1, W^T Xi rho = rho, tr W = 0, W >= 0}. The projection is
computed on the dual: maximise

    theta(lam) = <lam, b> - 1/2 |max(0, Y + B*(lam))|^2 + 1/2 |Y|^2

with a semismooth Newton method whose linear systems are solved by
Jacobi-preconditioned CG on the range of B.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import ProblemData, apply_B, apply_B_adjoint

logger = logging.getLogger(__name__)

ARMIJO_SLOPE = 1e-4
BACKTRACK = 0.5
MIN_STEP = 1e-12
MAX_STALLS = 200


class ProjectionError(RuntimeError):
    """Newton stagnation; carries the last residual."""

    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


class ProjectionInfeasible(ProjectionError):
    pass


@dataclass
class DualState:
    lam: np.ndarray
    active: np.ndarray | None = None
    newton_iters: int = 0
    cg_iters: int = 0
    residual: float = np.inf
    extra: dict = field(default_factory=dict)

    def copy(self) -> "DualState":
        return DualState(self.lam.copy(), None if self.active is None else self.active.copy())


def null_direction(pdata: ProblemData) -> np.ndarray:
    """Unit vector nu with B*(nu) = 0 (row sums and weighted column sums share the total mass)."""
    nu = np.concatenate([-pdata.wmass, pdata.vol, [0.0]])
    return nu / np.linalg.norm(nu)


def dual_objective(lam: np.ndarray, Y: np.ndarray, pdata: ProblemData) -> tuple[float, np.ndarray]:
    """Dual value theta(lam) and its gradient b - B(max(0, Y + B*(lam)))."""
    W = np.maximum(Y + apply_B_adjoint(lam, pdata), 0.0)
    theta = float(lam @ pdata.b) - 0.5 * float(np.sum(W * W)) + 0.5 * float(np.sum(Y * Y))
    return theta, pdata.b - apply_B(W, pdata)


def newton_matrix(active: np.ndarray, pdata: ProblemData) -> np.ndarray:
    """Dense V = B Diag(active) B* of size 2K+1."""
    K = pdata.K
    D = active.astype(float)
    e, w = pdata.vol, pdata.wmass
    d = np.diagonal(D)
    V = np.zeros((2 * K + 1, 2 * K + 1))
    V[:K, :K][np.diag_indices(K)] = D @ (e * e)
    V[K:2 * K, K:2 * K][np.diag_indices(K)] = (w * w) @ D
    V12 = w[:, None] * D * e[None, :]
    V[:K, K:2 * K] = V12
    V[K:2 * K, :K] = V12.T
    V[:K, 2 * K] = V[2 * K, :K] = d * e
    V[K:2 * K, 2 * K] = V[2 * K, K:2 * K] = d * w
    V[2 * K, 2 * K] = d.sum()
    return V


def newton_system_solve(state: DualState, Y: np.ndarray, pdata: ProblemData, eps_cg: float | None = None,
                        residual: np.ndarray | None = None) -> np.ndarray:
    """Solve (V + eps I) d = -r on the range of B by preconditioned CG.

    ``residual`` is r = B(W) - b; computed from ``state`` when omitted. The
    direction falls back to steepest ascent -r when CG hits its iteration cap.
    """
    if state.active is None:
        state.active = (Y + apply_B_adjoint(state.lam, pdata)) > 0.0
    if residual is None:
        W = np.maximum(Y + apply_B_adjoint(state.lam, pdata), 0.0)
        residual = apply_B(W, pdata) - pdata.b
    nu = null_direction(pdata)
    rhs = -residual
    rhs = rhs - (rhs @ nu) * nu
    rnorm = float(np.linalg.norm(residual))
    eps = max(1e-12, 1e-4 * rnorm)
    if eps_cg is None:
        eps_cg = min(0.1, rnorm ** 0.5)
    A = newton_matrix(state.active, pdata)
    A[np.diag_indices_from(A)] += eps
    d, iters, ok = _pcg(A, rhs, nu, eps_cg, maxiter=10 * A.shape[0])
    state.cg_iters += iters
    if not ok:
        logger.debug("CG cap reached after %d iterations; using steepest ascent", iters)
        return rhs
    return d


def _pcg(A, rhs, nu, rtol, maxiter):
    """Jacobi-preconditioned CG with the iterates kept orthogonal to nu."""
    n = rhs.shape[0]
    diag = np.diagonal(A).copy()
    inv = 1.0 / diag
    x = np.zeros(n)
    r = rhs.copy()
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return x, 0, True
    z = inv * r
    z -= (z @ nu) * nu
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        r -= (r @ nu) * nu
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, it, True
        z = inv * r
        z -= (z @ nu) * nu
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, False


def project_onto_S(Y: np.ndarray, pdata: ProblemData, eps_inner: float = 1e-9,
                   warm: DualState | None = None, max_iter: int = 100_000) -> tuple[np.ndarray, DualState]:
    """Projection of Y onto S; feasibility residual |B(W) - b| <= eps_inner on return."""
    if eps_inner <= 0.0:
        raise ValueError("eps_inner must be positive")
    K = pdata.K
    if Y.shape != (K, K):
        raise ValueError(f"expected a {K}x{K} matrix")
    # S holds the zero-diagonal transport plans between the element masses and
    # themselves; one exists iff no element carries more than half the mass
    w = pdata.wmass
    if np.any(w < 0.0) or 2.0 * w.max() > w.sum() * (1.0 + 1e-12):
        raise ProjectionInfeasible("S is empty: an element carries more than half of the total mass", np.inf)
    lam = np.zeros(2 * K + 1) if warm is None else warm.lam.copy()
    state = DualState(lam)
    b = pdata.b
    lam_cap = 1e12 * (1.0 + np.abs(Y).max()) * (1.0 + 1.0 / pdata.vol.min())

    def evaluate(lam):
        Wt = Y + apply_B_adjoint(lam, pdata)
        return Wt, np.maximum(Wt, 0.0)

    Wt, W = evaluate(lam)
    ymax = float(np.abs(Y).max())
    it = 0
    rnorm = np.inf
    stalled = 0
    for it in range(max_iter + 1):
        r = apply_B(W, pdata) - b
        rnorm = float(np.linalg.norm(r))
        state.residual = rnorm
        if rnorm <= eps_inner:
            state.newton_iters = it
            state.active = Wt > 0.0
            state.lam = lam
            return W, state
        if it == max_iter or stalled > MAX_STALLS:
            break
        state.lam = lam
        state.active = Wt > 0.0
        d = newton_system_solve(state, Y, pdata, residual=r)
        slope = -float(r @ d)
        if slope <= 0.0:
            d = -r
            slope = rnorm * rnorm
        db = float(d @ b)
        t = 1.0
        while True:
            lam_t = lam + t * d
            Wt_t, W_t = evaluate(lam_t)
            # theta(lam_t) - theta(lam), formed without the large common terms
            gain = t * db - 0.5 * float(np.sum((W_t - W) * (W_t + W)))
            if gain >= ARMIJO_SLOPE * t * slope:
                break
            # entries of Y + B*lam carry an absolute error of about eps * |Y|, so
            # gains below that level are noise; then a residual decrease decides
            scale = ymax + float(np.abs(Wt_t - Y).max())
            noise = 16 * np.finfo(float).eps * scale * float(np.abs(W_t).sum() + np.abs(W).sum())
            if gain >= -noise and np.linalg.norm(apply_B(W_t, pdata) - b) < rnorm:
                break
            t *= BACKTRACK
            if t < MIN_STEP:
                # line search lost in rounding: take the unit step and move on
                stalled += 1
                lam_t = lam + d
                Wt_t, W_t = evaluate(lam_t)
                break
        lam, Wt, W = lam_t, Wt_t, W_t
        if np.abs(lam).max() > lam_cap:
            raise ProjectionInfeasible("dual ascent diverges; S appears to be empty", rnorm)
    raise ProjectionError(f"Newton method stalled after {it} iterations (residual {rnorm:.3e})", rnorm)
