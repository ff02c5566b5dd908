"""Point transforms induced by linear changes of ray coordinates.

Re-spacing the planes, offsetting ray coordinates, or scaling them moves
every triangulated point by a fixed 4x4 homogeneous transform.  This module
builds those matrices, the intrinsics-induced transform between decoded and
indexed ray spaces, and the matching ray-domain actions used to verify the
commutation property: triangulating transformed rays equals transforming the
triangulated point.
"""

from __future__ import annotations

from typing import Final

import numpy as np
import numpy.typing as npt

from .exceptions import AspectMismatch, InvalidIntrinsics, InvalidSpacing
from .geometry import FloatArray, Ray

TOL_ASPECT: Final[float] = 1e-9

__all__ = [
    "TOL_ASPECT",
    "plane_respacing",
    "ray_offset_transform",
    "ray_scaling_transform",
    "point_transform_from_intrinsics",
    "apply_point_transform",
    "respace_ray",
    "offset_ray",
    "scale_ray",
    "check_aspect_consistent",
]


def _check_spacing(name: str, f: float) -> None:
    if not np.isfinite(f) or f <= 0.0:
        raise InvalidSpacing(f"{name} must be positive and finite, got {f}")


def plane_respacing(f: float, f_new: float) -> FloatArray:
    """Point transform for reinterpreting rays with a new plane spacing."""
    _check_spacing("f", f)
    _check_spacing("f_new", f_new)
    return np.diag([1.0, 1.0, f_new / f, 1.0])


def ray_offset_transform(offset: npt.ArrayLike, f: float = 1.0) -> FloatArray:
    """Point transform for adding (s0, t0, x0, y0) to every ray."""
    _check_spacing("f", f)
    s0, t0, x0, y0 = np.asarray(offset, dtype=np.float64)
    if not np.all(np.isfinite([s0, t0, x0, y0])):
        raise ValueError(f"offsets must be finite, got {offset!r}")
    m = np.eye(4)
    m[0, 2] = x0 / f
    m[1, 2] = y0 / f
    m[0, 3] = s0
    m[1, 3] = t0
    return m


def check_aspect_consistent(
    scales: npt.ArrayLike, tol_aspect: float = TOL_ASPECT
) -> bool:
    """True when k_s/k_t == k_x/k_y within tolerance (cross-multiplied)."""
    ks, kt, kx, ky = np.asarray(scales, dtype=np.float64)
    lhs = ks * ky
    rhs = kt * kx
    return abs(lhs - rhs) <= tol_aspect * max(abs(lhs), abs(rhs))


def ray_scaling_transform(
    scales: npt.ArrayLike, tol_aspect: float = TOL_ASPECT
) -> FloatArray:
    """Point transform for scaling ray coordinates by (k_s, k_t, k_x, k_y).

    A consistent point transform exists only when k_s/k_t == k_x/k_y; other
    scalings move the horizontal and vertical intersection depths apart.
    """
    ks, kt, kx, ky = np.asarray(scales, dtype=np.float64)
    if not np.all(np.isfinite([ks, kt, kx, ky])) or 0.0 in (ks, kt, kx, ky):
        raise ValueError(f"scale factors must be finite and nonzero, got {scales!r}")
    if not check_aspect_consistent((ks, kt, kx, ky), tol_aspect):
        raise AspectMismatch(
            f"k_s/k_t = {ks / kt!r} but k_x/k_y = {kx / ky!r}; "
            "no consistent point transform exists"
        )
    return np.diag([ks, kt, ks / kx, 1.0])


def point_transform_from_intrinsics(intrinsics) -> FloatArray:
    """Transform from physical points to indexed-ray points.

    For a point X seen through decoded rays, the same measurements treated
    as raw-index rays (i, j, u, v with spacing 1) triangulate at P @ X.
    Exact only when k_i/k_j == k_u/k_v; built as stated regardless.
    """
    ki, kj, ku, kv = (
        intrinsics.ki,
        intrinsics.kj,
        intrinsics.ku,
        intrinsics.kv,
    )
    if 0.0 in (ki, kj, ku, kv):
        raise InvalidIntrinsics(f"zero scale factor in {intrinsics!r}")
    return np.array(
        [
            [1.0 / ki, 0.0, -intrinsics.u0 / ki, 0.0],
            [0.0, 1.0 / kj, -intrinsics.v0 / kj, 0.0],
            [0.0, 0.0, ku / ki, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def apply_point_transform(m: npt.ArrayLike, points: npt.ArrayLike) -> FloatArray:
    """Apply a homogeneous 4x4 transform to (..., 3) points and dehomogenize."""
    t = np.asarray(m, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64)
    ph = np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)
    out = ph @ t.T
    return out[..., :3] / out[..., 3:4]


def respace_ray(ray: Ray, f_new: float) -> Ray:
    """Same coordinates read against a new plane spacing."""
    _check_spacing("f_new", f_new)
    return Ray(ray.s, ray.t, ray.x, ray.y, f_new)


def offset_ray(ray: Ray, offset: npt.ArrayLike) -> Ray:
    """Ray with (s0, t0, x0, y0) added to its coordinates."""
    s0, t0, x0, y0 = np.asarray(offset, dtype=np.float64)
    return Ray(ray.s + s0, ray.t + t0, ray.x + x0, ray.y + y0, ray.f)


def scale_ray(ray: Ray, scales: npt.ArrayLike) -> Ray:
    """Ray with coordinates multiplied by (k_s, k_t, k_x, k_y)."""
    ks, kt, kx, ky = np.asarray(scales, dtype=np.float64)
    return Ray(ks * ray.s, kt * ray.t, kx * ray.x, ky * ray.y, ray.f)
