"""The six-parameter camera model: decoding, encoding, and distortion.

Raw measurements are indexed pixels (i, j, u, v): integer view indices and
continuous pixel coordinates.  Decoding maps them to physical rays at plane
spacing 1: s = k_i*i, t = k_j*j, x = k_u*u + u0, y = k_v*v + v0.  The scene
length unit is whatever unit k_i and k_j carry per view index; this package
uses meters internally and converts to millimeters at file boundaries.

Distortion acts on decoded image coordinates: the rectified (undistorted)
point is x_u = (1 + k1*r^2 + k2*r^4)*x + k3*s with r^2 = x^2 + y^2, and
symmetrically for y with k4*t.  The forward (distorting) map is the
numerical inverse, needed only to synthesize observations.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Final, TypeAlias

import numpy as np
import numpy.typing as npt

from .exceptions import InvalidIntrinsics, NoConvergence
from .geometry import FloatArray, Ray, rodrigues

__all__ = [
    "CameraKind",
    "Intrinsics",
    "Distortion",
    "PixelIndex",
    "Pose",
    "decode",
    "decode_arrays",
    "encode",
    "encode_arrays",
    "undistort",
    "distort",
]

_DISTORT_TOL: Final[float] = 1e-14
_DISTORT_MAX_ITER: Final[int] = 50


class CameraKind(enum.Enum):
    """Optical layout; decides the sign of recovered t_z."""

    CONVENTIONAL = "conventional"
    FOCUSED_LONG_PATH = "focused_long_path"
    FOCUSED_SHORT_PATH = "focused_short_path"

    @property
    def positive_tz(self) -> bool:
        return self is not CameraKind.FOCUSED_LONG_PATH


@dataclasses.dataclass(frozen=True, slots=True)
class Intrinsics:
    """Decoding parameters: view-plane scales, pixel scales, pixel offsets."""

    ki: float
    kj: float
    ku: float
    kv: float
    u0: float
    v0: float

    def __post_init__(self) -> None:
        vals = dataclasses.astuple(self)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidIntrinsics(f"non-finite intrinsics: {vals}")
        if 0.0 in (self.ki, self.kj, self.ku, self.kv):
            raise InvalidIntrinsics(f"zero scale factor in {vals}")

    @property
    def principal_point_px(self) -> tuple[float, float]:
        """Pixel coordinates whose decoded image point is (0, 0)."""
        return (-self.u0 / self.ku, -self.v0 / self.kv)

    def as_array(self) -> FloatArray:
        return np.array(dataclasses.astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, a: npt.ArrayLike) -> "Intrinsics":
        ki, kj, ku, kv, u0, v0 = np.asarray(a, dtype=np.float64)
        return cls(float(ki), float(kj), float(ku), float(kv), float(u0), float(v0))


@dataclasses.dataclass(frozen=True, slots=True)
class Distortion:
    """Radial (k1, k2) and view-coupled (k3, k4) distortion coefficients."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0

    def __post_init__(self) -> None:
        vals = dataclasses.astuple(self)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite distortion: {vals}")

    @property
    def is_zero(self) -> bool:
        return self == Distortion()

    def as_array(self) -> FloatArray:
        return np.array(dataclasses.astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, a: npt.ArrayLike) -> "Distortion":
        k1, k2, k3, k4 = np.asarray(a, dtype=np.float64)
        return cls(float(k1), float(k2), float(k3), float(k4))


@dataclasses.dataclass(frozen=True, slots=True)
class PixelIndex:
    """An indexed raw measurement: view indices and pixel coordinates."""

    i: float
    j: float
    u: float
    v: float


VecLike: TypeAlias = npt.ArrayLike


@dataclasses.dataclass(frozen=True)
class Pose:
    """Rigid board-to-camera motion: axis-angle rotation plus translation."""

    rotation: FloatArray  # Rodrigues 3-vector, radians
    translation: FloatArray  # scene units

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=np.float64).reshape(3)
        tr = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(tr))):
            raise ValueError("pose entries must be finite")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    def matrix(self) -> FloatArray:
        return rodrigues(self.rotation)

    def apply(self, points: npt.ArrayLike) -> FloatArray:
        """Map (..., 3) world points into the camera frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.matrix().T + self.translation


def decode(px: PixelIndex, intrinsics: Intrinsics) -> Ray:
    """Decode one indexed pixel to a physical ray at plane spacing 1."""
    s, t, x, y = decode_arrays(px.i, px.j, px.u, px.v, intrinsics)
    return Ray(float(s), float(t), float(x), float(y), 1.0)


def decode_arrays(
    i: VecLike, j: VecLike, u: VecLike, v: VecLike, intrinsics: Intrinsics
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    """Vectorized decode; returns (s, t, x, y) arrays."""
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return (
        intrinsics.ki * i,
        intrinsics.kj * j,
        intrinsics.ku * u + intrinsics.u0,
        intrinsics.kv * v + intrinsics.v0,
    )


def encode(ray: Ray, intrinsics: Intrinsics) -> PixelIndex:
    """Exact inverse of decode for rays at plane spacing 1.

    The returned view indices are continuous; real measurements carry
    integers there.
    """
    if ray.f != 1.0:
        raise ValueError(f"encode expects plane spacing 1, got {ray.f}")
    i, j, u, v = encode_arrays(ray.s, ray.t, ray.x, ray.y, intrinsics)
    return PixelIndex(float(i), float(j), float(u), float(v))


def encode_arrays(
    s: VecLike, t: VecLike, x: VecLike, y: VecLike, intrinsics: Intrinsics
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    """Vectorized encode; returns (i, j, u, v) arrays."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return (
        s / intrinsics.ki,
        t / intrinsics.kj,
        (x - intrinsics.u0) / intrinsics.ku,
        (y - intrinsics.v0) / intrinsics.kv,
    )


def undistort(
    x: VecLike,
    y: VecLike,
    s: VecLike,
    t: VecLike,
    distortion: Distortion,
) -> tuple[FloatArray, FloatArray]:
    """Rectify distorted image coordinates given their view coordinates."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if distortion.is_zero:
        return x.copy(), y.copy()
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    r2 = x * x + y * y
    gamma = 1.0 + distortion.k1 * r2 + distortion.k2 * r2 * r2
    return gamma * x + distortion.k3 * s, gamma * y + distortion.k4 * t


def distort(
    x_u: VecLike,
    y_u: VecLike,
    s: VecLike,
    t: VecLike,
    distortion: Distortion,
    max_iter: int = _DISTORT_MAX_ITER,
    tol: float = _DISTORT_TOL,
) -> tuple[FloatArray, FloatArray]:
    """Invert the rectification map by damped Newton iteration.

    Initialized at the rectified value; reliable inside the basin
    |k1|*r^2 + |k2|*r^4 < 0.5.  Round-trips with undistort to about the
    convergence tolerance.
    """
    xu, yu, s, t = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (x_u, y_u, s, t))
    )
    if distortion.is_zero:
        return xu.copy(), yu.copy()
    k1, k2, k3, k4 = dataclasses.astuple(distortion)
    x = xu.astype(np.float64).copy()
    y = yu.astype(np.float64).copy()

    def residual(px: FloatArray, py: FloatArray) -> tuple[FloatArray, FloatArray]:
        r2 = px * px + py * py
        gamma = 1.0 + k1 * r2 + k2 * r2 * r2
        return gamma * px + k3 * s - xu, gamma * py + k4 * t - yu

    fx, fy = residual(x, y)
    for _ in range(max_iter):
        active = (np.abs(fx) > tol) | (np.abs(fy) > tol)
        if not np.any(active):
            return x, y
        r2 = x * x + y * y
        gamma = 1.0 + k1 * r2 + k2 * r2 * r2
        g = 2.0 * (k1 + 2.0 * k2 * r2)
        j11 = gamma + g * x * x
        j12 = g * x * y
        j22 = gamma + g * y * y
        det = j11 * j22 - j12 * j12
        det = np.where(np.abs(det) < 1e-300, np.inf, det)
        dx = (j22 * fx - j12 * fy) / det
        dy = (j11 * fy - j12 * fx) / det
        # damping: halve steps that do not shrink the residual
        old = fx * fx + fy * fy
        for _ in range(12):
            nx, ny = x - dx, y - dy
            nfx, nfy = residual(nx, ny)
            worse = active & (nfx * nfx + nfy * nfy > old)
            if not np.any(worse):
                break
            dx = np.where(worse, 0.5 * dx, dx)
            dy = np.where(worse, 0.5 * dy, dy)
        x = np.where(active, nx, x)
        y = np.where(active, ny, y)
        fx, fy = residual(x, y)
    active = (np.abs(fx) > tol) | (np.abs(fy) > tol)
    if np.any(active):
        raise NoConvergence(
            f"distortion inversion left {int(np.count_nonzero(active))} "
            f"point(s) above tolerance after {max_iter} iterations"
        )
    return x, y
