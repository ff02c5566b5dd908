"""Two-plane ray geometry: projection, triangulation, and rotations.

A ray is parameterized by the point (s, t, 0) where it crosses the view
plane and by its direction (x, y, f): it also passes through
(s + x, t + y, f).  With this convention a point (X, Y, Z) projects to
x = f*(X - s)/Z, y = f*(Y - t)/Z, and the two-ray closed forms below are
exact.  All coordinates share one length unit; the module is unit-agnostic.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Final, Sequence, TypeAlias

import numpy as np
import numpy.typing as npt

from .exceptions import DegenerateProjection, ParallelRays, RankDeficient

FloatArray: TypeAlias = npt.NDArray[np.float64]
Point3: TypeAlias = FloatArray  # shape (3,): X, Y, Z

EPS_Z: Final[float] = 1e-12
PARALLEL_EPS: Final[float] = 1e-10
TOL_RANK: Final[float] = 1e-8

__all__ = [
    "EPS_Z",
    "PARALLEL_EPS",
    "TOL_RANK",
    "FloatArray",
    "Point3",
    "Ray",
    "project",
    "measurement_rows",
    "measurement_rows_arrays",
    "intersect_two_rays",
    "intersect_two_rays_arrays",
    "triangulate",
    "triangulate_many",
    "rodrigues",
    "rodrigues_inv",
    "rotation_jacobian",
    "nearest_rotation",
    "skew",
]


@dataclasses.dataclass(frozen=True, slots=True)
class Ray:
    """One two-plane ray through (s, t, 0) with direction (x, y, f)."""

    s: float
    t: float
    x: float
    y: float
    f: float = 1.0

    def __post_init__(self) -> None:
        vals = (self.s, self.t, self.x, self.y, self.f)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"ray coordinates must be finite, got {vals}")
        if self.f <= 0.0:
            raise ValueError(f"plane spacing must be positive, got {self.f}")

    def as_array(self) -> FloatArray:
        return np.array([self.s, self.t, self.x, self.y], dtype=np.float64)


def project(
    point: npt.ArrayLike,
    view: npt.ArrayLike,
    f: float = 1.0,
    eps_z: float = EPS_Z,
) -> FloatArray:
    """Project camera-frame points through view-plane centers.

    ``point`` has shape (..., 3) and ``view`` shape (..., 2); the leading
    dimensions broadcast.  Returns (..., 2) image coordinates (x, y).  The
    homogeneous scale of the projection equals Z.
    """
    p = np.asarray(point, dtype=np.float64)
    w = np.asarray(view, dtype=np.float64)
    z = p[..., 2]
    if np.any(np.abs(z) < eps_z):
        raise DegenerateProjection(f"point on the view plane: |Z| < {eps_z}")
    x = f * (p[..., 0] - w[..., 0]) / z
    y = f * (p[..., 1] - w[..., 1]) / z
    return np.stack([x, y], axis=-1)


def measurement_rows(ray: Ray) -> FloatArray:
    """Two homogeneous constraint rows annihilating any point on the ray.

    Stacking the rows of n rays gives a (2n, 4) matrix M with M @ (X,Y,Z,1)
    = 0 at the common intersection point.
    """
    return np.array(
        [
            [ray.f, 0.0, -ray.x, -ray.f * ray.s],
            [0.0, ray.f, -ray.y, -ray.f * ray.t],
        ],
        dtype=np.float64,
    )


def measurement_rows_arrays(
    s: npt.ArrayLike,
    t: npt.ArrayLike,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    f: float = 1.0,
) -> FloatArray:
    """Vectorized constraint rows, shape (..., 2, 4)."""
    s, t, x, y = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (s, t, x, y))
    )
    rows = np.zeros(s.shape + (2, 4), dtype=np.float64)
    rows[..., 0, 0] = f
    rows[..., 0, 2] = -x
    rows[..., 0, 3] = -f * s
    rows[..., 1, 1] = f
    rows[..., 1, 2] = -y
    rows[..., 1, 3] = -f * t
    return rows


def intersect_two_rays(
    r_i: Ray, r_j: Ray, parallel_eps: float = PARALLEL_EPS
) -> Point3:
    """Closed-form intersection of two rays sharing one plane spacing.

    Two algebraically equivalent forms exist, one dividing by x_i - x_j and
    one by y_i - y_j; the better-conditioned denominator is used.
    """
    if r_i.f != r_j.f:
        raise ValueError(f"rays must share plane spacing, got {r_i.f} and {r_j.f}")
    out = intersect_two_rays_arrays(
        r_i.as_array()[None, :], r_j.as_array()[None, :], r_i.f, parallel_eps
    )
    return out[0]


def intersect_two_rays_arrays(
    rays_i: npt.ArrayLike,
    rays_j: npt.ArrayLike,
    f: float = 1.0,
    parallel_eps: float = PARALLEL_EPS,
) -> FloatArray:
    """Batched two-ray closed form over (..., 4) ray arrays (s, t, x, y)."""
    a = np.asarray(rays_i, dtype=np.float64)
    b = np.asarray(rays_j, dtype=np.float64)
    si, ti, xi, yi = (a[..., k] for k in range(4))
    sj, tj, xj, yj = (b[..., k] for k in range(4))
    dx = xi - xj
    dy = yi - yj
    bad = (np.abs(dx) < parallel_eps) & (np.abs(dy) < parallel_eps)
    if np.any(bad):
        raise ParallelRays(
            f"{int(np.count_nonzero(bad))} ray pair(s) with equal directions"
        )
    use_x = np.abs(dx) >= np.abs(dy)
    # guard the unused branch against 0/0; selection discards it
    dx_safe = np.where(use_x, dx, 1.0)
    dy_safe = np.where(use_x, 1.0, dy)
    x_form = np.stack(
        [
            (sj * xi - si * xj) / dx_safe,
            ti - yi * (si - sj) / dx_safe,
            f * (sj - si) / dx_safe,
        ],
        axis=-1,
    )
    y_form = np.stack(
        [
            si - xi * (ti - tj) / dy_safe,
            (tj * yi - ti * yj) / dy_safe,
            f * (tj - ti) / dy_safe,
        ],
        axis=-1,
    )
    return np.where(use_x[..., None], x_form, y_form)


def _rays_to_array(
    rays: Sequence[Ray] | npt.ArrayLike, f: float | None
) -> tuple[FloatArray, float]:
    if len(rays) > 0 and isinstance(rays[0], Ray):  # type: ignore[index]
        fs = {r.f for r in rays}  # type: ignore[union-attr]
        if len(fs) != 1:
            raise ValueError(f"rays must share one plane spacing, got {sorted(fs)}")
        arr = np.stack([r.as_array() for r in rays])  # type: ignore[union-attr]
        return arr, fs.pop()
    arr = np.asarray(rays, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected (n, 4) ray array, got shape {arr.shape}")
    return arr, 1.0 if f is None else f


def triangulate(
    rays: Sequence[Ray] | npt.ArrayLike,
    f: float | None = None,
    tol_rank: float = TOL_RANK,
) -> Point3:
    """Least-squares intersection point of two or more rays.

    Solves the stacked homogeneous constraint system by its smallest right
    singular vector and dehomogenizes.  For two noiseless rays this agrees
    with intersect_two_rays.
    """
    arr, f_val = _rays_to_array(rays, f)
    if arr.shape[0] < 2:
        raise ValueError(f"need at least 2 rays, got {arr.shape[0]}")
    return triangulate_many(arr[None, :, :], f_val, tol_rank)[0]


def triangulate_many(
    rays: npt.ArrayLike, f: float = 1.0, tol_rank: float = TOL_RANK
) -> FloatArray:
    """Batched triangulation of (B, n, 4) ray bundles into (B, 3) points."""
    arr = np.asarray(rays, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 4 or arr.shape[1] < 2:
        raise ValueError(f"expected (B, n>=2, 4) ray array, got shape {arr.shape}")
    m = measurement_rows_arrays(
        arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3], f
    ).reshape(arr.shape[0], 2 * arr.shape[1], 4)
    _, sv, vt = np.linalg.svd(m, full_matrices=False)
    # a second near-null direction means the bundle is ambiguous
    ambiguous = sv[:, 2] <= tol_rank * sv[:, 0]
    if np.any(ambiguous):
        raise RankDeficient(
            f"{int(np.count_nonzero(ambiguous))} bundle(s) with ambiguous nullspace"
        )
    h = vt[:, 3, :]
    scale = np.linalg.norm(h, axis=1)
    # Z ~ 0 marks a bundle sharing one projection center (depth unobservable),
    # w ~ 0 a point at infinity (parallel rays)
    degenerate = (np.abs(h[:, 2]) <= tol_rank * scale) | (
        np.abs(h[:, 3]) <= tol_rank * scale
    )
    if np.any(degenerate):
        raise RankDeficient(
            f"{int(np.count_nonzero(degenerate))} bundle(s) triangulate on the "
            "view plane or at infinity"
        )
    return h[:, :3] / h[:, 3:4]


def skew(w: npt.ArrayLike) -> FloatArray:
    """Cross-product matrix: skew(w) @ v == cross(w, v)."""
    w = np.asarray(w, dtype=np.float64)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


_SMALL_ANGLE: Final[float] = 1e-8


def rodrigues(w: npt.ArrayLike) -> FloatArray:
    """Rotation matrix of an axis-angle 3-vector (angle = norm, radians)."""
    w = np.asarray(w, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < _SMALL_ANGLE:
        # second-order series; error O(theta^3) is below round-off here
        return np.eye(3) + k + 0.5 * (k @ k)
    return (
        np.eye(3)
        + (math.sin(theta) / theta) * k
        + ((1.0 - math.cos(theta)) / theta**2) * (k @ k)
    )


def rodrigues_inv(r: npt.ArrayLike) -> FloatArray:
    """Axis-angle vector of a rotation matrix, angle wrapped into [0, pi].

    Uses quaternion extraction with the largest-pivot branch, which stays
    accurate for angles near both 0 and pi.
    """
    m = np.asarray(r, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        root = math.sqrt(1.0 + tr)
        qw = 0.5 * root
        g = 0.5 / root
        q = np.array(
            [m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]
        ) * g
    else:
        a = int(np.argmax(np.diagonal(m)))
        b, c = (a + 1) % 3, (a + 2) % 3
        root = math.sqrt(max(1.0 + m[a, a] - m[b, b] - m[c, c], 0.0))
        g = 0.5 / root
        q = np.empty(3)
        q[a] = 0.5 * root
        q[b] = (m[a, b] + m[b, a]) * g
        q[c] = (m[a, c] + m[c, a]) * g
        qw = (m[c, b] - m[b, c]) * g
    if qw < 0.0:  # keep the angle in [0, pi]
        qw, q = -qw, -q
    norm_q = float(np.linalg.norm(q))
    if norm_q < 1e-12:
        return 2.0 * q
    theta = 2.0 * math.atan2(norm_q, qw)
    return (theta / norm_q) * q


def rotation_jacobian(w: npt.ArrayLike) -> FloatArray:
    """Derivative of rodrigues(w): out[k] = d R / d w_k, shape (3, 3, 3)."""
    w = np.asarray(w, dtype=np.float64)
    theta2 = float(w @ w)
    out = np.empty((3, 3, 3))
    if theta2 < _SMALL_ANGLE**2:
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            out[k] = skew(e)
        return out
    r = rodrigues(w)
    ident = np.eye(3)
    for k in range(3):
        v = np.cross(w, (ident - r)[:, k])
        out[k] = ((w[k] * skew(w) + skew(v)) / theta2) @ r
    return out


def nearest_rotation(m: npt.ArrayLike) -> FloatArray:
    """Closest rotation matrix in Frobenius norm (polar projection)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r
