"""Synthetic jittered low-rank scenes and alignment-quality metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch
from .imaging import CanonicalFrame, Group, Image, TransformParams


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 64
    rank: int = 3
    n_frames: int = 30
    foreground_sparsity: float = 0.05
    foreground_magnitude: float = 1.0
    illumination_range: tuple = (1.0, 1.0)
    seed: int = 0
    smoothness: float = 3.0
    shading_smoothness: float = 12.0
    weight_jitter: float = 0.2

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if not 0 <= self.foreground_sparsity < 1:
            raise ValueError("foreground_sparsity must lie in [0, 1)")
        if self.width < 2 or self.height < 2 or self.n_frames < 1:
            raise ValueError("scene needs at least one 2x2 frame")
        lo, hi = self.illumination_range
        if not 0 < lo <= hi:
            raise ValueError("illumination_range must be a positive interval")
        if not 0 <= self.weight_jitter <= 0.5:
            raise ValueError("weight_jitter must lie in [0, 0.5]")


@dataclass(frozen=True)
class JitterSpec:
    """Full perturbation ranges: draws are uniform on [-x0/2, x0/2] etc.; theta0 in degrees."""

    x0: float = 20.0
    y0: float = 20.0
    theta0: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if min(self.x0, self.y0, self.theta0) < 0:
            raise ValueError("perturbation ranges must be nonnegative")


@dataclass
class Scene:
    frames: list
    U_true: np.ndarray
    W_true: np.ndarray
    fg_masks: list


def _smooth_field(rng, shape, sigma):
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="reflect")
    return f / np.abs(f).max()


def make_scene(spec: SceneSpec) -> Scene:
    """Generate a rank-``spec.rank`` smooth background with sparse foreground.

    The first basis image is a textured, strictly positive "mean appearance"
    (Gaussian noise smoothed at ``smoothness``); the others are low-frequency
    shading fields (smoothed at ``shading_smoothness``). The shading fields
    are zero-mean with bounded weights, so every
    background frame is nonnegative and a single global rescale maps the stack
    into [0, 1] without changing its rank. Per-frame gains scale columns and
    likewise preserve the rank.
    """
    rng = np.random.default_rng(spec.seed)
    h, w, r, N = spec.height, spec.width, spec.rank, spec.n_frames
    basis = np.empty((h * w, r))
    basis[:, 0] = (0.55 + 0.25 * _smooth_field(rng, (h, w), spec.smoothness)).ravel()
    # perturbation amplitudes sum to at most 0.2 < min(basis[:, 0]) * (1 - weight_jitter)
    amp = 0.2 / max(1, r - 1)
    for k in range(1, r):
        basis[:, k] = (amp * _smooth_field(rng, (h, w), spec.shading_smoothness)).ravel()
    W = np.empty((r, N))
    W[0] = 1.0 + spec.weight_jitter * rng.uniform(-1.0, 1.0, N)
    if r > 1:
        W[1:] = rng.uniform(-1.0, 1.0, (r - 1, N))
    lo, hi = spec.illumination_range
    gains = rng.uniform(lo, hi, N) if hi > lo else np.full(N, lo)
    X = (basis @ W) * gains
    scale = X.max()
    X /= scale
    W_true = W * gains / scale

    frames, masks = [], []
    for i in range(N):
        img = X[:, i].reshape(h, w).copy()
        mask = _foreground_mask(rng, h, w, spec.foreground_sparsity)
        img[mask] = spec.foreground_magnitude
        frames.append(Image(np.clip(img, 0.0, 1.0)))
        masks.append(mask)
    return Scene(frames, basis, W_true, masks)


def _foreground_mask(rng, h, w, sparsity):
    mask = np.zeros((h, w), dtype=bool)
    target = int(round(sparsity * h * w))
    side = max(2, int(round(min(h, w) / 10)))
    while mask.sum() < target:
        y = rng.integers(0, h - side + 1)
        x = rng.integers(0, w - side + 1)
        mask[y:y + side, x:x + side] = True
    return mask


def draw_jitter(spec: JitterSpec, n_frames: int) -> np.ndarray:
    """Draw ``(theta_radians, tx, ty)`` rows uniformly within the half ranges."""
    rng = np.random.default_rng(spec.seed)
    theta = np.deg2rad(rng.uniform(-spec.theta0 / 2, spec.theta0 / 2, n_frames))
    tx = rng.uniform(-spec.x0 / 2, spec.x0 / 2, n_frames)
    ty = rng.uniform(-spec.y0 / 2, spec.y0 / 2, n_frames)
    return np.column_stack([theta, tx, ty])


def render_transformed(image: Image, tau: TransformParams, supersample: int = 2) -> Image:
    """Render ``P`` such that warping ``P`` by ``tau`` reproduces ``image``.

    ``P(s) = image(tau^{-1}(s))`` in centered coordinates. Each output pixel is
    the box average of a ``supersample x supersample`` grid of subsamples; the
    resampling goes through scipy rather than the aligner's own interpolator.
    """
    h, w = image.shape
    k = supersample
    offs = (np.arange(k) + 0.5) / k - 0.5
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    acc = np.zeros((h, w))
    for oy in offs:
        for ox in offs:
            pts = np.column_stack([(xs + ox - cx).ravel(), (ys + oy - cy).ravel()])
            src = tau.inverse_map_points(pts)
            coords = np.vstack([src[:, 1] + cy, src[:, 0] + cx])
            acc += ndimage.map_coordinates(image.data, coords, order=1, mode="nearest").reshape(h, w)
    return Image(np.clip(acc / (k * k), 0.0, 1.0))


def jitter(frames, spec: JitterSpec, frame: CanonicalFrame | None = None, supersample: int = 2):
    """Perturb each frame by a random in-plane rotation and translation.

    Returns ``(perturbed, tau_true)``; warping ``perturbed[i]`` onto the
    canonical frame through ``tau_true[i]`` recovers the original content.
    With all ranges zero the frames are returned unchanged.
    """
    draws = draw_jitter(spec, len(frames))
    perturbed, taus = [], []
    for img, row in zip(frames, draws):
        tau = TransformParams(Group.EUCLIDEAN, row)
        if not np.any(row):
            perturbed.append(img)
        else:
            perturbed.append(render_transformed(img, tau, supersample))
        taus.append(tau)
    return perturbed, taus


@dataclass
class PixelTraceStats:
    max_error: float
    mean_error: float
    std: np.ndarray  # (x1, y1, x2, y2, ...)

    def as_row(self):
        return [self.max_error, self.mean_error, *map(float, self.std)]


def default_trace_points(frame: CanonicalFrame) -> np.ndarray:
    """The two canonical third-points, in centered coordinates."""
    pts = np.array(
        [[(frame.width - 1) / 3.0, (frame.height - 1) / 3.0],
         [2 * (frame.width - 1) / 3.0, 2 * (frame.height - 1) / 3.0]]
    )
    return pts - [(frame.width - 1) / 2.0, (frame.height - 1) / 2.0]


def pixel_trace_stats(tau_est, tau_true, trace_points) -> PixelTraceStats:
    """Spread of traced points about their per-point statistical center.

    Each point is mapped through ``est o true^{-1}`` for every frame; errors
    are distances to the mean location across frames, so a bias common to
    all frames does not register.
    """
    if len(tau_est) != len(tau_true) or not tau_est:
        raise DimensionMismatch("need equally many (and at least one) estimated and true transforms")
    pts = np.asarray(trace_points, dtype=np.float64).reshape(-1, 2)
    # est(true^-1(p)) written as p + (est(q) - true(q)), q = true^-1(p): exact zeros when est == true
    disp = []
    for est, true in zip(tau_est, tau_true):
        q = true.inverse_map_points(pts)
        disp.append(est.map_points(q) - true.map_points(q))
    disp = np.stack(disp)  # (frames, points, 2)
    dist = np.linalg.norm(disp - disp.mean(axis=0), axis=2)
    std = disp.std(axis=0).ravel()
    return PixelTraceStats(float(dist.max()), float(dist.mean()), std)


def corner_error(tau_est, tau_true, frame: CanonicalFrame) -> np.ndarray:
    """Per-frame RMS displacement of the four canonical corners between two mappings."""
    if len(tau_est) != len(tau_true):
        raise DimensionMismatch("need equally many estimated and true transforms")
    corners = frame.corners()
    out = np.empty(len(tau_est))
    for i, (est, true) in enumerate(zip(tau_est, tau_true)):
        diff = est.map_points(corners) - true.map_points(corners)
        out[i] = np.sqrt(np.mean(np.sum(diff**2, axis=1)))
    return out
