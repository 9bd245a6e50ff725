"""Orthonormal subspaces and the rank-one geodesic gradient step on G(d, n)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadRank, DimensionMismatch

REORTHO_EVERY = 100
ORTHO_TOL = 1e-8


@dataclass(eq=False)
class Subspace:
    """An n x d orthonormal basis, plus a count of geodesic steps taken.

    The step count drives periodic re-orthonormalization; it is carried along
    by :func:`geodesic_step` and does not affect equality of bases.
    """

    basis: np.ndarray
    steps: int = 0

    def __post_init__(self):
        basis = np.array(self.basis, dtype=np.float64, order="C")
        if basis.ndim != 2:
            raise DimensionMismatch("basis must be a 2-D array")
        n, d = basis.shape
        if not 1 <= d < n:
            raise BadRank(f"need 1 <= d < n, got n={n}, d={d}")
        self.basis = basis

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def ortho_residual(self) -> float:
        """Frobenius norm of ``U^T U - I``."""
        return float(np.linalg.norm(self.basis.T @ self.basis - np.eye(self.d)))

    def copy(self) -> "Subspace":
        return Subspace(self.basis.copy(), self.steps)


def orthonormalize(basis: np.ndarray) -> np.ndarray:
    """Thin QR with the sign of R's diagonal fixed positive (closest-basis convention)."""
    q, r = np.linalg.qr(basis)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def init_random(n: int, d: int, seed: int) -> Subspace:
    if not 1 <= d < n:
        raise BadRank(f"need 1 <= d < n, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    return Subspace(orthonormalize(rng.standard_normal((n, d))))


@dataclass
class GradientInfo:
    gamma: np.ndarray
    w: np.ndarray
    sigma: float

    def gradient(self) -> np.ndarray:
        """The full rank-one gradient ``Gamma w^T`` (n x d); for diagnostics only."""
        return np.outer(self.gamma, self.w)


def loss_gradient(U, sol, warped, J) -> GradientInfo:
    """Grassmann gradient of the augmented Lagrangian at the ADMM solution.

    ``Gamma = (I - U U^T)(lambda + mu h)`` with ``h = U w + e - warped - J dtau``;
    the gradient is ``Gamma w^T`` with singular value ``||Gamma|| ||w||``.
    """
    basis = U.basis if isinstance(U, Subspace) else np.asarray(U)
    v = getattr(warped, "values", warped)
    v = np.asarray(v, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    n, d = basis.shape
    if v.shape != (n,) or J.shape[0] != n or sol.w.shape != (d,) or sol.e.shape != (n,):
        raise DimensionMismatch("subspace, warped vector, Jacobian and solution disagree")
    if sol.delta_tau.shape != (J.shape[1],):
        raise DimensionMismatch("delta_tau length does not match Jacobian columns")
    h = basis @ sol.w + sol.e - v - J @ sol.delta_tau
    gamma1 = sol.lam + sol.mu_final * h
    gamma = gamma1 - basis @ (basis.T @ gamma1)
    sigma = float(np.linalg.norm(gamma) * np.linalg.norm(sol.w))
    return GradientInfo(gamma, sol.w.copy(), sigma)


def geodesic_step(U: Subspace, g: GradientInfo, eta: float, reortho_every: int = REORTHO_EVERY) -> Subspace:
    """Move ``U`` a distance ``eta`` along the geodesic in direction ``-Gamma w^T``.

    The update is rank one and only touches the plane spanned by
    ``U w/||w||`` and ``Gamma/||Gamma||``. A zero singular value (perfect fit
    or ``w = 0``) returns ``U`` unchanged.
    """
    basis = U.basis
    gnorm = float(np.linalg.norm(g.gamma))
    wnorm = float(np.linalg.norm(g.w))
    if g.sigma == 0.0 or gnorm == 0.0 or wnorm == 0.0 or eta == 0.0:
        return Subspace(basis.copy(), U.steps)
    t = eta * g.sigma
    what = g.w / wnorm
    direction = (np.cos(t) - 1.0) * (basis @ what) - np.sin(t) * (g.gamma / gnorm)
    new = basis + np.outer(direction, what)
    steps = U.steps + 1
    if reortho_every and steps % reortho_every == 0:
        new = orthonormalize(new)
    return Subspace(new, steps)


@dataclass
class StepSizeRule:
    """Constant (``eta0``) or diminishing (``eta0 / (1 + decay t)``) step sizes."""

    kind: str = "constant"
    eta0: float = 0.1
    decay: float = 0.01
    t: int = field(default=0)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("constant", "diminishing"):
            raise ValueError(f"unknown step-size rule {self.kind!r}")
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if self.kind == "diminishing" and not self.decay > 0:
            raise ValueError("decay must be positive")


def next_step_size(rule: StepSizeRule, sigma: float = 0.0) -> float:
    """Return the current step size and advance the rule's counter."""
    if rule.kind == "constant":
        eta = rule.eta0
    else:
        eta = rule.eta0 / (1.0 + rule.decay * rule.t)
    rule.t += 1
    return eta
