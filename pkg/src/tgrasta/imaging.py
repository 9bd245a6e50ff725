"""Images, parametric warps onto a canonical frame, and warp Jacobians.

Coordinate convention: canonical pixel centers sit at integer coordinates
``0..width_c-1`` / ``0..height_c-1``. A canonical pixel ``q`` is centered on the
frame, mapped by ``A q + t`` and then shifted to the center of the source image,
so the identity transform samples the central ``width_c x height_c`` window.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import DimensionMismatch, OutOfBounds, SingularTransform, ZeroNorm

_ZERO_NORM = 1e-14
_SINGULAR_DET = 1e-8
_STRICT_SLACK = 1e-9

BOUNDARY_POLICIES = ("clamp", "strict")


class Group(enum.Enum):
    TRANSLATION = "translation"
    EUCLIDEAN = "euclidean"
    AFFINE = "affine"

    @property
    def p(self) -> int:
        return _GROUP_DIMS[self]

    @classmethod
    def parse(cls, tag) -> "Group":
        if isinstance(tag, cls):
            return tag
        try:
            return cls(str(tag).lower())
        except ValueError:
            raise ValueError(f"unknown transform group {tag!r}") from None


_GROUP_DIMS = {Group.TRANSLATION: 2, Group.EUCLIDEAN: 3, Group.AFFINE: 6}


@dataclass(frozen=True, eq=False)
class Image:
    """Grayscale image with intensities in [0, 1], stored as an (h, w) array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C")
        if data.ndim != 2 or min(data.shape) < 2:
            raise DimensionMismatch(f"image must be 2-D and at least 2x2, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite intensities")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "Image":
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise DimensionMismatch(f"expected {width * height} values, got {values.size}")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def vector(self) -> np.ndarray:
        return self.data.ravel()


@dataclass(frozen=True)
class CanonicalFrame:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("canonical frame must be at least 2x2")

    @property
    def n(self) -> int:
        return self.width * self.height

    @cached_property
    def centered_grid(self):
        """Row-major centered coordinates of all canonical pixel centers."""
        ys, xs = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        xs -= (self.width - 1) / 2.0
        ys -= (self.height - 1) / 2.0
        return xs.ravel(), ys.ravel()

    def corners(self) -> np.ndarray:
        """The four corner pixel centers in centered coordinates, shape (4, 2)."""
        hx = (self.width - 1) / 2.0
        hy = (self.height - 1) / 2.0
        return np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])


@dataclass(frozen=True, eq=False)
class TransformParams:
    """A point in a transformation group.

    ``params`` layout: translation ``(tx, ty)``; Euclidean ``(theta, tx, ty)``
    with theta in radians; affine ``(a11, a12, a21, a22, tx, ty)``.
    """

    group: Group
    params: np.ndarray

    def __post_init__(self):
        group = Group.parse(self.group)
        params = np.array(self.params, dtype=np.float64).ravel()
        if params.size != group.p:
            raise DimensionMismatch(
                f"{group.value} transform needs {group.p} parameters, got {params.size}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("transform parameters must be finite")
        params.setflags(write=False)
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "params", params)

    @classmethod
    def identity(cls, group) -> "TransformParams":
        group = Group.parse(group)
        if group is Group.AFFINE:
            return cls(group, [1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        return cls(group, np.zeros(group.p))

    @property
    def p(self) -> int:
        return self.group.p

    def __eq__(self, other):
        if not isinstance(other, TransformParams):
            return NotImplemented
        return self.group is other.group and np.array_equal(self.params, other.params)

    def __hash__(self):
        return hash((self.group, self.params.tobytes()))

    def __repr__(self):
        vals = ", ".join(f"{v:.6g}" for v in self.params)
        return f"TransformParams({self.group.value}, [{vals}])"

    def linear_part(self) -> np.ndarray:
        g, q = self.group, self.params
        if g is Group.TRANSLATION:
            return np.eye(2)
        if g is Group.EUCLIDEAN:
            c, s = np.cos(q[0]), np.sin(q[0])
            return np.array([[c, -s], [s, c]])
        return np.array([[q[0], q[1]], [q[2], q[3]]])

    def translation(self) -> np.ndarray:
        return np.array(self.params[-2:])

    def map_points(self, pts) -> np.ndarray:
        """Apply ``x -> A x + t`` to centered points of shape (m, 2)."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        return pts @ self.linear_part().T + self.translation()

    def inverse_map_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        A = self.linear_part()
        _check_nonsingular(A)
        return np.linalg.solve(A, (pts - self.translation()).T).T


@dataclass(frozen=True, eq=False)
class WarpedVector:
    values: np.ndarray
    norm: float


def _check_nonsingular(A):
    if abs(np.linalg.det(A)) <= _SINGULAR_DET:
        raise SingularTransform(f"linear part is singular (det={np.linalg.det(A):.3g})")


def _as_image(image) -> Image:
    return image if isinstance(image, Image) else Image(image)


def sample_locations(tau: TransformParams, frame: CanonicalFrame, source_shape):
    """Source-image coordinates hit by every canonical pixel, in row-major order."""
    A = tau.linear_part()
    _check_nonsingular(A)
    xc, yc = frame.centered_grid
    h, w = source_shape
    tx, ty = tau.translation()
    xs = A[0, 0] * xc + A[0, 1] * yc + tx + (w - 1) / 2.0
    ys = A[1, 0] * xc + A[1, 1] * yc + ty + (h - 1) / 2.0
    return xs, ys


def _check_boundary(xs, ys, source_shape, boundary):
    if boundary == "clamp":
        return
    if boundary != "strict":
        raise ValueError(f"unknown boundary policy {boundary!r}")
    h, w = source_shape
    bad = (
        (xs < -_STRICT_SLACK)
        | (xs > w - 1 + _STRICT_SLACK)
        | (ys < -_STRICT_SLACK)
        | (ys > h - 1 + _STRICT_SLACK)
    )
    if np.any(bad):
        raise OutOfBounds(f"{int(bad.sum())} of {bad.size} samples fall outside the source image")


def out_of_domain_fraction(tau, frame, source_shape) -> float:
    xs, ys = sample_locations(tau, frame, source_shape)
    h, w = source_shape
    bad = (xs < 0) | (xs > w - 1) | (ys < 0) | (ys > h - 1)
    return float(bad.mean())


def normalize(v):
    """Return ``(v / ||v||, ||v||)``; raises ZeroNorm for a (numerically) zero vector."""
    v = np.asarray(v, dtype=np.float64)
    nrm = float(np.linalg.norm(v))
    if nrm < _ZERO_NORM:
        raise ZeroNorm("cannot normalize a vector with zero norm")
    return v / nrm, nrm


def warp(image, tau: TransformParams, frame: CanonicalFrame, boundary="clamp") -> WarpedVector:
    """Bilinearly resample ``image`` onto ``frame`` through ``tau`` (unnormalized)."""
    image = _as_image(image)
    xs, ys = sample_locations(tau, frame, image.shape)
    _check_boundary(xs, ys, image.shape, boundary)
    values = kernels.bilinear(image.data, xs, ys)
    return WarpedVector(values, float(np.linalg.norm(values)))


def warp_normalized(image, tau, frame, boundary="clamp") -> WarpedVector:
    raw = warp(image, tau, frame, boundary)
    unit, nrm = normalize(raw.values)
    return WarpedVector(unit, nrm)


def _param_jacobian(group, params, xc, yc, dx, dy):
    """Chain the sampled spatial gradient through d(location)/d(params)."""
    if group is Group.TRANSLATION:
        return np.column_stack([dx, dy])
    if group is Group.EUCLIDEAN:
        c, s = np.cos(params[0]), np.sin(params[0])
        dtheta = dx * (-s * xc - c * yc) + dy * (c * xc - s * yc)
        return np.column_stack([dtheta, dx, dy])
    return np.column_stack([dx * xc, dx * yc, dy * xc, dy * yc, dx, dy])


def warp_with_jacobian(image, tau, frame, boundary="clamp", normalized=True):
    """Warp ``image`` and differentiate the result with respect to ``tau``.

    Returns ``(WarpedVector, J)``. With ``normalized=True`` (the default) the
    vector is unit-norm and ``J`` is the Jacobian of the normalized warp,
    ``(I - u u^T) J0 / ||v||``; otherwise both are the raw warp quantities.
    """
    image = _as_image(image)
    xs, ys = sample_locations(tau, frame, image.shape)
    _check_boundary(xs, ys, image.shape, boundary)
    v, dx, dy = kernels.bilinear_grad(image.data, xs, ys)
    xc, yc = frame.centered_grid
    J0 = _param_jacobian(tau.group, tau.params, xc, yc, dx, dy)
    if not normalized:
        return WarpedVector(v, float(np.linalg.norm(v))), J0
    u, nrm = normalize(v)
    J = (J0 - np.outer(u, u @ J0)) / nrm
    return WarpedVector(u, nrm), J


def warp_jacobian(image, tau, frame, boundary="clamp") -> np.ndarray:
    """Jacobian (n x p) of the normalized warped vector with respect to ``tau``."""
    return warp_with_jacobian(image, tau, frame, boundary)[1]


def apply_delta(tau: TransformParams, delta) -> TransformParams:
    """Additive parameter update; no group composition, no angle wrapping."""
    delta = np.asarray(delta, dtype=np.float64).ravel()
    if delta.size != tau.p:
        raise DimensionMismatch(f"delta has {delta.size} entries, transform has {tau.p}")
    return TransformParams(tau.group, tau.params + delta)
