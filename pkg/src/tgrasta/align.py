"""Batch, fully online and trained online alignment drivers."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from . import admm, grassmann
from .errors import OutOfBounds, TGrastaError
from .grassmann import StepSizeRule, Subspace
from .imaging import (CanonicalFrame, Group, Image, TransformParams, apply_delta, out_of_domain_fraction,
                      warp_with_jacobian)

log = logging.getLogger(__name__)


@dataclass
class BatchConfig:
    d: int = 5
    max_outer: int = 15
    inner_passes: int = 3
    conv_eps: float = 1e-3
    conv_eps_abs: float = 1.0
    step_rule: StepSizeRule = field(default_factory=lambda: StepSizeRule("diminishing", 0.003, 0.02))
    admm: admm.AdmmOptions = field(default_factory=admm.AdmmOptions)
    seed: int = 0
    boundary: str = "clamp"
    # remove the mean increment each outer iteration (the batch is only defined up to a common transform)
    recenter: bool = True

    def __post_init__(self):
        if min(self.d, self.max_outer, self.inner_passes) < 1:
            raise ValueError("d, max_outer and inner_passes must be at least 1")
        if not (self.conv_eps > 0 and self.conv_eps_abs > 0):
            raise ValueError("convergence tolerances must be positive")


@dataclass
class OnlineState:
    subspaces: list
    step_rules: list
    frame_count: int = 0

    def __post_init__(self):
        if not self.subspaces:
            raise ValueError("online state needs at least one subspace")
        if len({U.n for U in self.subspaces}) != 1:
            raise ValueError("all subspaces must share the ambient dimension")
        if len(self.step_rules) != len(self.subspaces):
            raise ValueError("need one step-size rule per subspace")

    @property
    def L(self) -> int:
        return len(self.subspaces)


@dataclass
class AlignmentResult:
    taus: list
    outliers: list
    weights: list
    lowrank: list
    subspace: object
    trace: list
    residuals: list = field(default_factory=list)
    converged: bool = False
    failures: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    step_rule: StepSizeRule | None = None

    @property
    def outer_iterations(self) -> int:
        return len(self.trace)


@dataclass
class TrainedModel:
    subspace: Subspace
    frame: CanonicalFrame
    group: Group

    def __post_init__(self):
        self.group = Group.parse(self.group)
        if self.subspace.n != self.frame.n:
            raise ValueError("subspace ambient dimension must equal the frame pixel count")


def has_converged(deltas, taus, conv_eps, conv_eps_abs=1.0) -> bool:
    """Mean over images of ``||dtau|| / max(||tau||, conv_eps_abs)`` below ``conv_eps``."""
    if len(deltas) != len(taus):
        raise ValueError("deltas and taus must have equal length")
    if not deltas:
        return True
    ratios = [
        np.linalg.norm(np.asarray(dt)) / max(np.linalg.norm(_params(t)), conv_eps_abs)
        for dt, t in zip(deltas, taus)
    ]
    return float(np.mean(ratios)) < conv_eps


def _params(tau):
    return tau.params if isinstance(tau, TransformParams) else np.asarray(tau, dtype=np.float64)


def _solve_and_step(U, v, J, cfg, rule):
    sol = admm.solve(admm.LinearizedProblem(U.basis, v.values, J), cfg.admm)
    g = grassmann.loss_gradient(U, sol, v, J)
    eta = grassmann.next_step_size(rule, g.sigma)
    return sol, grassmann.geodesic_step(U, g, eta)


def align_batch(images, tau0, frame: CanonicalFrame, cfg: BatchConfig | None = None, U0=None) -> AlignmentResult:
    """Jointly align ``images``, learn a rank-``cfg.d`` subspace, and split off outliers.

    Each outer iteration linearizes every image at its current transform,
    runs ``cfg.inner_passes`` incremental passes (ADMM solve, then a geodesic
    subspace step per image, in a seeded random order), and finally applies
    every image's latest transform increment at once. With ``cfg.recenter``
    the mean increment is removed first, which pins the otherwise free common
    transform of the batch to its starting value.
    """
    cfg = cfg or BatchConfig()
    N = len(images)
    if N < 1 or len(tau0) != N:
        raise ValueError("need at least one image and one initial transform per image")
    rng = np.random.default_rng(cfg.seed)
    U = U0.copy() if U0 is not None else grassmann.init_random(frame.n, cfg.d, cfg.seed)
    rule = copy.deepcopy(cfg.step_rule)
    taus = list(tau0)
    failures = {}
    trace, snapshots = [], []
    sols = [None] * N
    converged = False

    for k in range(cfg.max_outer):
        lin = [None] * N
        for i in range(N):
            if i in failures:
                continue
            try:
                lin[i] = warp_with_jacobian(images[i], taus[i], frame, cfg.boundary)
            except OutOfBounds as exc:
                failures[i] = str(exc)
                log.warning("image %d dropped: %s", i, exc)
        active = [i for i in range(N) if lin[i] is not None]
        if not active:
            break

        for _ in range(cfg.inner_passes):
            for i in rng.permutation(active):
                v, J = lin[i]
                sols[i], U = _solve_and_step(U, v, J, cfg, rule)

        deltas = [sols[i].delta_tau for i in active]
        if cfg.recenter:
            mean_delta = np.mean(deltas, axis=0)
            deltas = [dt - mean_delta for dt in deltas]
        cur = [taus[i] for i in active]
        trace.append(float(np.mean([np.linalg.norm(dt) for dt in deltas])))
        converged = has_converged(deltas, cur, cfg.conv_eps, cfg.conv_eps_abs)
        for i, dt in zip(active, deltas):
            taus[i] = apply_delta(taus[i], dt)
        snapshots.append(U.copy())
        log.debug("outer %d: mean |dtau| = %.3e", k + 1, trace[-1])
        if converged:
            break

    result = _collect(taus, sols, U, U, trace, converged, failures, snapshots, frame.n, cfg.d)
    result.step_rule = rule
    return result


def _collect(taus, sols, U, subspace, trace, converged, failures, snapshots, n, d):
    outliers, weights, lowrank, residuals = [], [], [], []
    for sol in sols:
        if sol is None:
            outliers.append(np.zeros(n))
            weights.append(np.zeros(d))
            lowrank.append(np.zeros(n))
            residuals.append(float("nan"))
        else:
            outliers.append(sol.e)
            weights.append(sol.w)
            lowrank.append(U.basis @ sol.w)
            residuals.append(sol.residual)
    return AlignmentResult(
        taus=taus,
        outliers=outliers,
        weights=weights,
        lowrank=lowrank,
        subspace=subspace,
        trace=trace,
        residuals=residuals,
        converged=converged,
        failures=failures,
        snapshots=snapshots,
    )


def init_online(training, tau0, frame, cfg: BatchConfig | None = None, L: int = 1):
    """Seed ``L`` online levels from snapshots of a batch run on ``training``.

    Level ``l`` takes the subspace after outer iteration ``K - L + l``; when
    fewer than ``L`` iterations ran, every level gets the final subspace.
    Every level's step-size rule resumes where the batch schedule stopped, so
    the stream does not start with steps larger than the batch finished with.
    Returns ``(state, batch_result)``.
    """
    cfg = cfg or BatchConfig()
    if L < 1:
        raise ValueError("L must be at least 1")
    result = align_batch(training, tau0, frame, cfg)
    if len(result.snapshots) >= L:
        snaps = [U.copy() for U in result.snapshots[-L:]]
    else:
        snaps = [result.subspace.copy() for _ in range(L)]
    rules = [copy.deepcopy(result.step_rule) for _ in range(L)]
    return OnlineState(snaps, rules, 0), result


def online_step(state: OnlineState, image, tau0, frame, cfg: BatchConfig | None = None):
    """Process one frame through every level of the union of subspaces.

    At each level the frame is relinearized at the current transform, the
    ADMM solve runs against that level's subspace, the subspace takes a
    geodesic step, and the transform increment is applied immediately.
    Returns ``(new_state, tau, e, sol)`` where ``e`` and ``sol`` come from the
    last level. ``state`` itself is not modified.
    """
    cfg = cfg or BatchConfig()
    subspaces = list(state.subspaces)
    rules = [copy.copy(r) for r in state.step_rules]
    tau = tau0
    sol = None
    for ell in range(state.L):
        v, J = warp_with_jacobian(image, tau, frame, cfg.boundary)
        sol, subspaces[ell] = _solve_and_step(subspaces[ell], v, J, cfg, rules[ell])
        tau = apply_delta(tau, sol.delta_tau)
    new_state = OnlineState(subspaces, rules, state.frame_count + 1)
    return new_state, tau, sol.e, sol


def align_online(state: OnlineState, images, tau0, frame, cfg: BatchConfig | None = None):
    """Run :func:`online_step` over a stream; returns ``(state, AlignmentResult)``."""
    cfg = cfg or BatchConfig()
    taus, sols, failures = [], [], {}
    for i, (img, t0) in enumerate(zip(images, tau0)):
        try:
            state, tau, _, sol = online_step(state, img, t0, frame, cfg)
        except TGrastaError as exc:
            failures[i] = str(exc)
            taus.append(t0)
            sols.append(None)
            continue
        taus.append(tau)
        sols.append(sol)
    last = state.subspaces[-1]
    result = _collect(taus, sols, last, state, [], True, failures, [], frame.n, last.d)
    return state, result


def align_trained(model: TrainedModel, image, tau0, max_iters=20, conv_eps=1e-3, conv_eps_abs=1.0,
                  admm_opts=None, boundary="clamp", max_outside=0.25):
    """Align one image against a fixed subspace; the model is never modified.

    Returns ``(tau, e, converged)``. ``converged`` is false when the relative
    increment never drops below ``conv_eps`` within ``max_iters`` iterations,
    or when the fixed point leaves more than ``max_outside`` of the samples
    outside the image: clamped samples carry no alignment information, so a
    stall there is an artifact of the boundary policy rather than a fit.
    """
    admm_opts = admm_opts or admm.AdmmOptions()
    basis = model.subspace.basis
    tau = tau0
    e = np.zeros(model.frame.n)
    image = image if isinstance(image, Image) else Image(image)
    for _ in range(max_iters):
        v, J = warp_with_jacobian(image, tau, model.frame, boundary)
        sol = admm.solve(admm.LinearizedProblem(basis, v.values, J), admm_opts)
        e = sol.e
        prev = tau
        tau = apply_delta(tau, sol.delta_tau)
        if has_converged([sol.delta_tau], [prev], conv_eps, conv_eps_abs):
            inside = out_of_domain_fraction(tau, model.frame, image.shape) <= max_outside
            return tau, e, inside
    return tau, e, False
