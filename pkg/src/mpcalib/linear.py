"""Closed-form calibration initialization.

Pipeline: per-pose homography from indexed rays, a five-entry Gram-matrix
solve across poses, Cholesky recovery of the image-plane intrinsics,
extrinsic extraction per pose, and two scalar least-squares solves for the
view-plane scales.  Raw view indices and pixels are treated as ray
coordinates at plane spacing 1; the homography then absorbs the decoding
parameters together with the board pose.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
import numpy.typing as npt

from .camera import CameraKind, Intrinsics, Pose
from .dataset import CalibrationDataset
from .exceptions import (
    CalibrationError,
    DegenerateBoard,
    InsufficientPoses,
    InsufficientRays,
    NoParallax,
    NotPositiveDefinite,
    NullspaceAmbiguous,
    RankDeficient,
    ZeroScale,
)
from .geometry import FloatArray, nearest_rotation, rodrigues_inv

logger = logging.getLogger(__name__)

TOL_NULLSPACE = 1e-6
TOL_H_BOTTOM = 1e-6
TOL_GRAM_RANK = 1e-8
TOL_COLLINEAR = 1e-9

__all__ = [
    "estimate_homography",
    "solve_gram_vector",
    "intrinsics_from_gram",
    "extrinsics_from_homography",
    "solve_view_scales",
    "linear_calibrate",
]


def _rms(a: FloatArray) -> float:
    return float(np.sqrt(np.mean(np.square(a))))


def estimate_homography(
    points_xy: npt.ArrayLike,
    point_index: npt.ArrayLike,
    rays: npt.ArrayLike,
    tol_nullspace: float = TOL_NULLSPACE,
) -> FloatArray:
    """Estimate the 4x3 pose homography from planar points and their rays.

    ``points_xy`` holds the planar world coordinates (N, 2); ``rays`` the
    observed ray coordinates (M, 4) as (s, t, x, y) at plane spacing 1, and
    ``point_index`` (M,) maps each ray to its world point.  Points seen by
    fewer than two distinct views are dropped.  The stacked constraint
    system is solved by its smallest right singular vector after an
    error-shape-preserving normalization of ray and world coordinates (the
    normalization is itself a valid ray scaling plus offset, so it changes
    nothing in exact arithmetic).  The result is scaled so the bottom-right
    entry is 1; the remaining bottom-row entries are structurally zero and
    returned as exact zeros.
    """
    world = np.asarray(points_xy, dtype=np.float64)
    idx = np.asarray(point_index, dtype=np.int64)
    r = np.asarray(rays, dtype=np.float64)
    if r.ndim != 2 or r.shape[1] != 4:
        raise ValueError(f"expected (M, 4) rays, got {r.shape}")
    if idx.shape[0] != r.shape[0]:
        raise ValueError("point_index and rays disagree in length")

    # keep only points observed from >= 2 distinct views
    usable: list[int] = []
    keep = np.zeros(len(idx), dtype=bool)
    for n in np.unique(idx):
        sel = idx == n
        views = np.unique(r[sel][:, :2], axis=0)
        if views.shape[0] >= 2:
            usable.append(int(n))
            keep |= sel
    if len(usable) < 3:
        raise InsufficientRays(
            f"only {len(usable)} point(s) with rays from two distinct views; "
            "need at least 3"
        )
    pts = world[np.asarray(usable)]
    centered = pts - pts.mean(axis=0)
    sv_w = np.linalg.svd(centered, compute_uv=False)
    if sv_w[1] <= TOL_COLLINEAR * sv_w[0]:
        raise DegenerateBoard("usable board points are collinear")

    idx = idx[keep]
    r = r[keep]
    s, t, x, y = r.T

    # ray normalization restricted to maps the model allows exactly:
    # a common scale on (s, t), a common scale plus offset on (x, y)
    mx = float(x.mean())
    my = float(y.mean())
    spread_uv = _rms(np.concatenate([x - mx, y - my]))
    spread_ij = _rms(np.concatenate([s, t]))
    c_uv = np.sqrt(2.0) / spread_uv if spread_uv > 0.0 else 1.0
    c_ij = np.sqrt(2.0) / spread_ij if spread_ij > 0.0 else 1.0
    sn = c_ij * s
    tn = c_ij * t
    xn = c_uv * (x - mx)
    yn = c_uv * (y - my)

    w_mean = world.mean(axis=0)
    spread_w = _rms(np.linalg.norm(world - w_mean, axis=1))
    gamma = np.sqrt(2.0) / spread_w if spread_w > 0.0 else 1.0
    pw = np.empty((len(idx), 3))
    pw[:, :2] = gamma * (world[idx] - w_mean)
    pw[:, 2] = 1.0

    m = len(idx)
    a = np.zeros((2 * m, 12))
    a[0::2, 0:3] = pw
    a[0::2, 6:9] = -xn[:, None] * pw
    a[0::2, 9:12] = -sn[:, None] * pw
    a[1::2, 3:6] = pw
    a[1::2, 6:9] = -yn[:, None] * pw
    a[1::2, 9:12] = -tn[:, None] * pw

    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    if sv[-2] <= tol_nullspace * sv[0]:
        raise NullspaceAmbiguous(
            "homography system has a second near-null direction "
            f"(sv ratio {sv[-2] / sv[0]:.2e})"
        )
    hn = vt[-1].reshape(4, 3)

    # undo the normalization through the matching point transforms
    t_norm = np.array(
        [
            [c_ij, 0.0, -c_ij * mx, 0.0],
            [0.0, c_ij, -c_ij * my, 0.0],
            [0.0, 0.0, c_ij / c_uv, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    s_world = np.array(
        [
            [gamma, 0.0, -gamma * w_mean[0]],
            [0.0, gamma, -gamma * w_mean[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    h = np.linalg.solve(t_norm, hn) @ s_world

    scale = h[3, 2]
    if abs(scale) < 1e-12 * np.abs(h).max():
        raise ZeroScale("homography bottom-right entry vanished")
    h = h / scale
    deviation = float(np.abs(h[3, :2]).max())
    if deviation > TOL_H_BOTTOM:
        logger.debug("homography bottom row off (0,0,1) by %.3e", deviation)
    # the model fixes the bottom row exactly and no consumer reads h41/h42
    h[3, 0] = 0.0
    h[3, 1] = 0.0
    return h


def solve_gram_vector(
    homographies: list[npt.ArrayLike] | list[FloatArray],
    tol_rank: float = TOL_GRAM_RANK,
) -> FloatArray:
    """Solve the five distinct Gram-matrix entries from pose homographies.

    Each pose contributes two linear constraints: the first two columns of
    its upper 3x2 block are orthogonal and of equal norm under the Gram
    metric.  Solved by the smallest right singular vector; the sign is fixed
    so the first entry (a squared diagonal term) is positive.
    """
    rows = []
    for h_raw in homographies:
        h = np.asarray(h_raw, dtype=np.float64)
        g1 = h[:3, 0]
        g2 = h[:3, 1]
        rows.append(
            [
                g1[0] * g2[0],
                g1[0] * g2[2] + g2[0] * g1[2],
                g1[1] * g2[1],
                g1[1] * g2[2] + g1[2] * g2[1],
                g1[2] * g2[2],
            ]
        )
        rows.append(
            [
                g1[0] ** 2 - g2[0] ** 2,
                2.0 * (g1[0] * g1[2] - g2[0] * g2[2]),
                g1[1] ** 2 - g2[1] ** 2,
                2.0 * (g1[1] * g1[2] - g2[1] * g2[2]),
                g1[2] ** 2 - g2[2] ** 2,
            ]
        )
    a = np.asarray(rows, dtype=np.float64)
    # full matrices: with 2 poses the system is 4x5 and the economy SVD
    # would drop the nullspace direction that holds the solution
    _, sv, vt = np.linalg.svd(a, full_matrices=True)
    if a.shape[0] < 4 or len(sv) < 4 or sv[3] <= tol_rank * sv[0]:
        raise RankDeficient(
            f"Gram system rank below 4 with {len(homographies)} pose(s); "
            "add poses with distinct rotations"
        )
    b = vt[-1]
    if b[0] < 0.0:
        b = -b
    return b


def intrinsics_from_gram(
    gram: npt.ArrayLike,
) -> tuple[tuple[float, float, float, float], FloatArray]:
    """Recover (k_u, k_v, u0, v0) and the scale-free inverse intrinsic map.

    Assembles the symmetric Gram matrix from its five entries, factors it by
    Cholesky, and reads the parameters off ratios of the upper-triangular
    factor.  When the view-plane and image-plane scale ratios disagree, the
    recovered k_v absorbs that ratio (k_u*k_j/k_i); the nonlinear stage
    removes the bias.
    """
    b = np.asarray(gram, dtype=np.float64).copy()
    if b.shape != (5,):
        raise ValueError(f"expected 5 Gram entries, got shape {b.shape}")
    if b[0] < 0.0:
        b = -b
    full = np.array(
        [
            [b[0], 0.0, b[1]],
            [0.0, b[2], b[3]],
            [b[1], b[3], b[4]],
        ]
    )
    try:
        chol = np.linalg.cholesky(full)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(
            "Gram matrix is not positive definite; add poses or reduce noise"
        ) from e
    a_inv = chol.T
    a33 = a_inv[2, 2]
    ku = a_inv[0, 0] / a33
    kv = a_inv[1, 1] / a33
    u0 = a_inv[0, 2] / a33
    v0 = a_inv[1, 2] / a33
    return (float(ku), float(kv), float(u0), float(v0)), a_inv


def extrinsics_from_homography(
    h: npt.ArrayLike,
    a_inv: npt.ArrayLike,
    kind: CameraKind = CameraKind.CONVENTIONAL,
) -> tuple[Pose, float]:
    """Extract the board pose and scale from one homography.

    The global sign is chosen so the recovered t_z matches the camera kind
    (positive except for long-path focused layouts); the rotation is
    projected to the nearest orthonormal matrix.
    """
    hm = np.asarray(h, dtype=np.float64)
    ai = np.asarray(a_inv, dtype=np.float64)
    v1 = ai @ hm[:3, 0]
    v2 = ai @ hm[:3, 1]
    v3 = ai @ hm[:3, 2]
    lam_mag = 0.5 * (np.linalg.norm(v1) + np.linalg.norm(v2))
    if lam_mag <= 1e-15 * max(1.0, float(np.abs(hm).max())):
        raise ZeroScale("homography decomposition scale is zero")
    tz_sign_positive = (v3[2] / lam_mag) > 0.0
    alpha = 1.0 if tz_sign_positive == kind.positive_tz else -1.0
    lam = alpha * lam_mag
    r1 = v1 / lam
    r2 = v2 / lam
    r3 = np.cross(r1, r2)
    rot = nearest_rotation(np.column_stack([r1, r2, r3]))
    t = v3 / lam
    return Pose(rotation=rodrigues_inv(rot), translation=t), float(lam)


def solve_view_scales(
    poses: list[Pose],
    world_points: npt.ArrayLike,
    observations: list[tuple[npt.NDArray, ...]],
    image_params: tuple[float, float, float, float],
) -> tuple[float, float]:
    """Solve the two view-plane scales from all poses jointly.

    ``observations`` holds one (point_index, i, j, u, v) tuple per pose.
    Decoded image coordinates and camera-frame points turn each measurement
    with a nonzero view index into one linear equation per axis; the two
    single-unknown least-squares problems are independent.
    """
    ku, kv, u0, v0 = image_params
    world = np.asarray(world_points, dtype=np.float64)
    world3 = np.concatenate([world, np.zeros((world.shape[0], 1))], axis=1)
    num_i = den_i = num_j = den_j = 0.0
    for pose, (pidx, i, j, u, v) in zip(poses, observations):
        pc = pose.apply(world3)[np.asarray(pidx, dtype=np.int64)]
        i = np.asarray(i, dtype=np.float64)
        j = np.asarray(j, dtype=np.float64)
        x = ku * np.asarray(u, dtype=np.float64) + u0
        y = kv * np.asarray(v, dtype=np.float64) + v0
        rhs_i = pc[:, 0] - x * pc[:, 2]
        rhs_j = pc[:, 1] - y * pc[:, 2]
        mi = i != 0.0
        mj = j != 0.0
        num_i += float(i[mi] @ rhs_i[mi])
        den_i += float(i[mi] @ i[mi])
        num_j += float(j[mj] @ rhs_j[mj])
        den_j += float(j[mj] @ j[mj])
    if den_i == 0.0:
        raise NoParallax("all usable horizontal view indices are zero")
    if den_j == 0.0:
        raise NoParallax("all usable vertical view indices are zero")
    return num_i / den_i, num_j / den_j


def linear_calibrate(
    dataset: CalibrationDataset,
    kind: CameraKind | None = None,
) -> tuple[Intrinsics, list[Pose]]:
    """Closed-form estimate of all six intrinsics and per-pose extrinsics."""
    if kind is None:
        kind = dataset.camera_kind
    if dataset.n_poses < 2:
        raise InsufficientPoses(
            f"insufficient poses: dataset has {dataset.n_poses}, need at least 2"
        )
    if dataset.n_poses == 2:
        warnings.warn(
            "calibrating from only 2 poses; estimates will be poorly conditioned",
            UserWarning,
            stacklevel=2,
        )
    board_xy = dataset.board.corner_points()

    homographies: list[FloatArray] = []
    obs_tuples: list[tuple[npt.NDArray, ...]] = []
    for pose_obs, pidx in dataset.iter_flat():
        rays = np.column_stack(
            [
                pose_obs.i.astype(np.float64),
                pose_obs.j.astype(np.float64),
                pose_obs.u,
                pose_obs.v,
            ]
        )
        try:
            homographies.append(estimate_homography(board_xy, pidx, rays))
        except CalibrationError as e:
            raise type(e)(f"pose {pose_obs.pose_id}: {e}") from e
        obs_tuples.append((pidx, pose_obs.i, pose_obs.j, pose_obs.u, pose_obs.v))

    gram = solve_gram_vector(homographies)
    (ku, kv, u0, v0), a_inv = intrinsics_from_gram(gram)

    poses: list[Pose] = []
    for h, pose_obs in zip(homographies, dataset.poses):
        try:
            pose, _ = extrinsics_from_homography(h, a_inv, kind)
        except CalibrationError as e:
            raise type(e)(f"pose {pose_obs.pose_id}: {e}") from e
        poses.append(pose)

    ki, kj = solve_view_scales(poses, board_xy, obs_tuples, (ku, kv, u0, v0))
    return Intrinsics(ki, kj, ku, kv, u0, v0), poses
