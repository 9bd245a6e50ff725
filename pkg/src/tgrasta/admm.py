"""ADMM solver for the locally linearized l1 alignment problem.

Solves ``min ||e||_1  s.t.  v + J dtau = U w + e`` for one image, where ``v``
is the normalized warped image and ``J`` its warp Jacobian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateJacobian, DimensionMismatch, NonFinite


@dataclass(frozen=True)
class AdmmOptions:
    rho: float = 2.0
    eps_tol: float = 1e-7
    max_iters: int = 50
    mu0: float = 1.0
    mu_max: float = 1e12

    def __post_init__(self):
        if not self.rho > 1:
            raise ValueError("rho must exceed 1")
        if not self.eps_tol > 0:
            raise ValueError("eps_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.mu0 <= self.mu_max:
            raise ValueError("need 0 < mu0 <= mu_max")


@dataclass
class AdmmSolution:
    w: np.ndarray
    e: np.ndarray
    delta_tau: np.ndarray
    lam: np.ndarray
    mu_final: float
    iterations: int
    residual: float
    converged: bool
    degenerate: bool = False


@dataclass
class LinearizedProblem:
    U: np.ndarray
    warped: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(getattr(self.U, "basis", self.U), dtype=np.float64)
        self.warped = np.asarray(getattr(self.warped, "values", self.warped), dtype=np.float64)
        self.J = np.asarray(self.J, dtype=np.float64)
        n = self.U.shape[0]
        if self.warped.shape != (n,) or self.J.ndim != 2 or self.J.shape[0] != n:
            raise DimensionMismatch(
                f"row dimensions disagree: U {self.U.shape}, warped {self.warped.shape}, J {self.J.shape}"
            )


def soft_threshold(x, theta):
    if theta < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


def residual_h(prob: LinearizedProblem, w, e, delta_tau) -> np.ndarray:
    """Constraint residual ``U w + e - warped - J delta_tau``."""
    w, e, delta_tau = (np.asarray(a, dtype=np.float64) for a in (w, e, delta_tau))
    n, d = prob.U.shape
    if w.shape != (d,) or e.shape != (n,) or delta_tau.shape != (prob.J.shape[1],):
        raise DimensionMismatch("w, e or delta_tau has the wrong length")
    return prob.U @ w + e - prob.warped - prob.J @ delta_tau


def precompute_factors(prob: LinearizedProblem):
    """Return ``(P, F)``: the subspace coefficient map and a regularized pinv of J.

    For a general basis ``P = (U^T U)^{-1} U^T``; the basis is orthonormal, so
    ``P = U^T``. ``F = (J^T J + eps I)^{-1} J^T`` with ``eps = 1e-10 tr(J^T J) / p``.
    """
    P = prob.U.T
    J = prob.J
    p = J.shape[1]
    JtJ = J.T @ J
    tr = float(np.trace(JtJ))
    if tr < 1e-20:
        raise DegenerateJacobian("Jacobian is numerically zero")
    F = np.linalg.solve(JtJ + (1e-10 * tr / p) * np.eye(p), J.T)
    return P, F


def solve(prob: LinearizedProblem, opts: AdmmOptions | None = None) -> AdmmSolution:
    """Run the ADMM iteration from a cold start.

    Updates per iteration, in order: ``dtau``, ``w``, ``e`` (soft threshold at
    ``1/mu``), the dual ``lam``, then ``mu <- min(rho mu, mu_max)``. Exits once
    ``||h||_2 <= eps_tol``. A zero Jacobian freezes ``dtau`` at 0 and flags the
    solution as ``degenerate``. ``mu_final`` is the penalty used in the last
    dual update, which is the one that pairs with ``lam`` in the gradient.
    """
    opts = opts or AdmmOptions()
    U, v, J = prob.U, prob.warped, prob.J
    n, d = U.shape
    p = J.shape[1]
    try:
        P, F = precompute_factors(prob)
        degenerate = False
    except DegenerateJacobian:
        P, F = U.T, None
        degenerate = True

    w = np.zeros(d)
    e = np.zeros(n)
    dtau = np.zeros(p)
    lam = np.zeros(n)
    mu = opts.mu0
    mu_used = mu
    res = np.inf
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        if F is not None:
            dtau = F @ (U @ w + e - v + lam / mu)
            target = v + J @ dtau
        else:
            target = v
        w = P @ (target - e - lam / mu)
        Uw = U @ w
        e = soft_threshold(target - Uw - lam / mu, 1.0 / mu)
        h = Uw + e - target
        lam = lam + mu * h
        mu_used = mu
        mu = min(opts.rho * mu, opts.mu_max)
        res = float(np.linalg.norm(h))
        if not np.isfinite(res) or not np.all(np.isfinite(lam)):
            raise NonFinite(f"ADMM iterate became non-finite at iteration {it}")
        if res <= opts.eps_tol:
            converged = True
            break

    return AdmmSolution(
        w=w,
        e=e,
        delta_tau=dtau,
        lam=lam,
        mu_final=mu_used,
        iterations=it,
        residual=res,
        converged=converged,
        degenerate=degenerate,
    )
