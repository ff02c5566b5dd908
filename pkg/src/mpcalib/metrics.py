"""Reprojection and ray-distance error metrics, plus pose export.

Pixel-domain errors compare the rectified observed ray against the ray the
estimated model predicts for the same view, scaled back to pixels per axis.
``rms_px`` is the root mean square over individual axis components, so on
data with independent per-axis pixel noise of spread sigma and an exact
model it estimates sigma itself.  ``mean_px`` averages the per-observation
Euclidean error instead.  Ray errors measure the point-to-line distance in
millimeters between each rectified observed ray and the board corner placed
by the estimated pose.
"""

from __future__ import annotations

import dataclasses
import re
from pathlib import Path
from typing import Any

import numpy as np

from .camera import Distortion, Intrinsics, Pose, undistort
from .dataset import MM_PER_M, BoardSpec, CalibrationDataset
from .exceptions import DatasetError, DegenerateProjection
from .geometry import EPS_Z, FloatArray

__all__ = [
    "MetricReport",
    "compute_metrics",
    "export_poses",
    "read_pose_export",
]

# frustum plotting constants: depth as a fraction of the median board
# distance, half-extent as a fraction of that depth
FRUSTUM_DEPTH_FRACTION = 0.3
FRUSTUM_HALF_EXTENT_FRACTION = 0.2


@dataclasses.dataclass(frozen=True, slots=True)
class MetricReport:
    """Aggregate and per-slice error summary for one parameter set."""

    rms_px: float
    mean_px: float
    rms_ray_mm: float
    per_pose_rms_px: dict[int, float]
    per_view_rms_px: dict[tuple[int, int], float]


def compute_metrics(
    dataset: CalibrationDataset,
    intrinsics: Intrinsics,
    distortion: Distortion,
    poses: list[Pose] | tuple[Pose, ...],
) -> MetricReport:
    """Evaluate a parameter set against every observation in the dataset.

    ``poses`` aligns with ``dataset.poses`` by position.
    """
    if len(poses) != dataset.n_poses:
        raise ValueError(
            f"{len(poses)} pose(s) given for {dataset.n_poses} dataset pose(s)"
        )
    board3 = dataset.board.corner_points_3d()
    ik = intrinsics

    sq_sums: dict[int, float] = {}
    sq_counts: dict[int, int] = {}
    view_sums: dict[tuple[int, int], float] = {}
    view_counts: dict[tuple[int, int], int] = {}
    total_sq = 0.0
    total_components = 0
    norm_sum = 0.0
    ray_sq_sum = 0.0
    n_obs = 0

    for pose, (pose_obs, pidx) in zip(poses, dataset.iter_flat()):
        s = ik.ki * pose_obs.i.astype(np.float64)
        t = ik.kj * pose_obs.j.astype(np.float64)
        x = ik.ku * pose_obs.u + ik.u0
        y = ik.kv * pose_obs.v + ik.v0
        xu, yu = undistort(x, y, s, t, distortion)

        pc = pose.apply(board3)[pidx]
        zc = pc[:, 2]
        if np.any(np.abs(zc) < EPS_Z):
            raise DegenerateProjection(
                f"pose {pose_obs.pose_id}: board corner on the view plane"
            )
        xh = (pc[:, 0] - s) / zc
        yh = (pc[:, 1] - t) / zc

        ex = (xu - xh) / ik.ku
        ey = (yu - yh) / ik.kv
        sq = ex * ex + ey * ey
        total_sq += float(np.sum(sq))
        total_components += 2 * len(sq)
        norm_sum += float(np.sum(np.sqrt(sq)))
        n_obs += len(sq)

        pid = pose_obs.pose_id
        sq_sums[pid] = sq_sums.get(pid, 0.0) + float(np.sum(sq))
        sq_counts[pid] = sq_counts.get(pid, 0) + 2 * len(sq)
        for key in np.unique(
            np.stack([pose_obs.i, pose_obs.j], axis=1), axis=0
        ):
            sel = (pose_obs.i == key[0]) & (pose_obs.j == key[1])
            k = (int(key[0]), int(key[1]))
            view_sums[k] = view_sums.get(k, 0.0) + float(np.sum(sq[sel]))
            view_counts[k] = view_counts.get(k, 0) + 2 * int(np.sum(sel))

        origin = np.stack([s, t, np.zeros_like(s)], axis=1)
        direction = np.stack([xu, yu, np.ones_like(xu)], axis=1)
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        w = pc - origin
        ray_sq_sum += float(np.sum(np.square(np.cross(w, direction))))

    rms_px = float(np.sqrt(total_sq / total_components))
    mean_px = norm_sum / n_obs
    rms_ray_mm = float(np.sqrt(ray_sq_sum / n_obs)) * MM_PER_M
    return MetricReport(
        rms_px=rms_px,
        mean_px=mean_px,
        rms_ray_mm=rms_ray_mm,
        per_pose_rms_px={
            pid: float(np.sqrt(sq_sums[pid] / sq_counts[pid])) for pid in sq_sums
        },
        per_view_rms_px={
            k: float(np.sqrt(view_sums[k] / view_counts[k])) for k in view_sums
        },
    )


def export_poses(
    board: BoardSpec,
    pose_ids: list[int] | tuple[int, ...],
    poses: list[Pose] | tuple[Pose, ...],
    path: str | Path,
) -> None:
    """Write board corners in the camera frame as a plain-text point list.

    One line per corner: ``pose <id> corner <row> <col> <X> <Y> <Z>`` with
    coordinates in millimeters, followed by a small camera glyph (apex at
    the origin and four rectangle vertices on a nominal far plane) for
    plotting tools.
    """
    if len(pose_ids) != len(poses):
        raise ValueError("pose_ids and poses disagree in length")
    board3 = board.corner_points_3d()
    lines = ["# board corners in the camera frame, millimeters"]
    for pid, pose in zip(pose_ids, poses):
        pc = pose.apply(board3) * MM_PER_M
        for n in range(board.n_corners):
            row, col = divmod(n, board.cols)
            lines.append(
                f"pose {int(pid)} corner {row} {col} "
                f"{pc[n, 0]:.17g} {pc[n, 1]:.17g} {pc[n, 2]:.17g}"
            )
    tz = [abs(float(p.translation[2])) * MM_PER_M for p in poses]
    zf = FRUSTUM_DEPTH_FRACTION * float(np.median(tz)) if tz else 1.0
    he = FRUSTUM_HALF_EXTENT_FRACTION * zf
    lines.append("frustum apex 0 0 0")
    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        lines.append(f"frustum vertex {sx * he:.17g} {sy * he:.17g} {zf:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_CORNER_RE = re.compile(
    r"^pose\s+(-?\d+)\s+corner\s+(\d+)\s+(\d+)\s+(\S+)\s+(\S+)\s+(\S+)$"
)
_FRUSTUM_RE = re.compile(r"^frustum\s+(apex|vertex)\s+(\S+)\s+(\S+)\s+(\S+)$")


def read_pose_export(
    path: str | Path,
) -> tuple[dict[tuple[int, int, int], tuple[float, float, float]], list[Any]]:
    """Parse a pose export back into corner and frustum records."""
    corners: dict[tuple[int, int, int], tuple[float, float, float]] = {}
    frustum: list[tuple[str, float, float, float]] = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m = _CORNER_RE.match(line)
        if m:
            pid, row, col = int(m[1]), int(m[2]), int(m[3])
            corners[(pid, row, col)] = (float(m[4]), float(m[5]), float(m[6]))
            continue
        m = _FRUSTUM_RE.match(line)
        if m:
            frustum.append((m[1], float(m[2]), float(m[3]), float(m[4])))
            continue
        raise DatasetError(f"{path}: unrecognized line {lineno}: {line!r}")
    return corners, frustum
