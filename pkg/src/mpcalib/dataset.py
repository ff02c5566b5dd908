"""Dataset and result containers with their JSON file formats.

Files carry lengths in millimeters (board cell, translations); in memory all
geometry is in meters so the intrinsic view-plane scales keep their natural
per-index unit.  Floating-point fields serialize via Python's repr, which
preserves every value exactly on round-trip (17 significant digits at most).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import numpy.typing as npt

from .camera import CameraKind, Distortion, Intrinsics, Pose, undistort
from .exceptions import DatasetError
from .geometry import FloatArray

SCHEMA_DATASET = "mpcalib/dataset-v1"
SCHEMA_RESULT = "mpcalib/result-v1"
MM_PER_M = 1000.0

__all__ = [
    "SCHEMA_DATASET",
    "SCHEMA_RESULT",
    "MM_PER_M",
    "BoardSpec",
    "ViewGrid",
    "PoseObservations",
    "CalibrationDataset",
    "StageMetrics",
    "RefinementReport",
    "CalibrationResult",
    "file_digest",
    "rectify_dataset",
    "view_axis",
]


def _get(mapping: Any, key: str, path: str) -> Any:
    """Fetch a required field, naming it on failure."""
    field = f"{path}.{key}" if path else key
    if not isinstance(mapping, dict):
        raise DatasetError(f"expected an object at '{path}'", field=path)
    if key not in mapping:
        raise DatasetError(f"missing field '{field}'", field=field)
    return mapping[key]


def view_axis(n: int) -> npt.NDArray[np.int64]:
    """Symmetric view-index axis for an n-wide grid.

    Odd n gives -(n-1)/2 .. (n-1)/2; even n gives -n/2 .. n/2 without 0,
    keeping the axis symmetric around the central view.
    """
    if n < 2:
        raise ValueError(f"view axis needs at least 2 entries, got {n}")
    if n % 2 == 1:
        h = (n - 1) // 2
        return np.arange(-h, h + 1, dtype=np.int64)
    h = n // 2
    vals = np.arange(-h, h + 1, dtype=np.int64)
    return vals[vals != 0]


@dataclasses.dataclass(frozen=True, slots=True)
class BoardSpec:
    """Planar calibration board: a rows-by-cols grid of corner points."""

    rows: int
    cols: int
    cell_mm: float

    def __post_init__(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise DatasetError(
                f"board needs at least 2x2 corners, got {self.rows}x{self.cols}",
                field="board",
            )
        if not (math.isfinite(self.cell_mm) and self.cell_mm > 0.0):
            raise DatasetError(
                f"board cell must be positive, got {self.cell_mm}", field="board.cell_mm"
            )

    @property
    def n_corners(self) -> int:
        return self.rows * self.cols

    def corner_points(self) -> FloatArray:
        """All corners as (N, 2) world coordinates in meters.

        Corner (row, col) sits at (col*cell, row*cell); corner (0, 0) is the
        world origin.  Index order is row-major: n = row*cols + col.
        """
        cell_m = self.cell_mm / MM_PER_M
        rr, cc = np.meshgrid(
            np.arange(self.rows), np.arange(self.cols), indexing="ij"
        )
        return np.stack(
            [cc.ravel() * cell_m, rr.ravel() * cell_m], axis=1
        ).astype(np.float64)

    def corner_points_3d(self) -> FloatArray:
        xy = self.corner_points()
        return np.concatenate([xy, np.zeros((xy.shape[0], 1))], axis=1)

    def to_json_dict(self) -> dict[str, Any]:
        return {"rows": self.rows, "cols": self.cols, "cell_mm": float(self.cell_mm)}

    @classmethod
    def from_json_dict(cls, d: Any, path: str = "board") -> "BoardSpec":
        return cls(
            rows=int(_get(d, "rows", path)),
            cols=int(_get(d, "cols", path)),
            cell_mm=float(_get(d, "cell_mm", path)),
        )


@dataclasses.dataclass(frozen=True)
class ViewGrid:
    """The set of view indices present in a dataset."""

    i_values: tuple[int, ...]
    j_values: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.i_values) < 2 or len(self.j_values) < 2:
            raise DatasetError(
                "view grid needs at least 2 indices per axis", field="view_grid"
            )

    @classmethod
    def from_shape(cls, n_i: int, n_j: int) -> "ViewGrid":
        return cls(
            tuple(int(k) for k in view_axis(n_i)),
            tuple(int(k) for k in view_axis(n_j)),
        )

    @property
    def n_views(self) -> int:
        return len(self.i_values) * len(self.j_values)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "i_range": [min(self.i_values), max(self.i_values)],
            "j_range": [min(self.j_values), max(self.j_values)],
        }


class PoseObservations:
    """Flat per-pose corner observations across all views.

    Arrays run over every observed (view, corner) pair: integer view indices
    (i, j), board corner indices (row, col), and pixel coordinates (u, v).
    """

    __slots__ = ("pose_id", "i", "j", "row", "col", "u", "v")

    def __init__(
        self,
        pose_id: int,
        i: npt.ArrayLike,
        j: npt.ArrayLike,
        row: npt.ArrayLike,
        col: npt.ArrayLike,
        u: npt.ArrayLike,
        v: npt.ArrayLike,
    ) -> None:
        self.pose_id = int(pose_id)
        self.i = np.asarray(i, dtype=np.int64)
        self.j = np.asarray(j, dtype=np.int64)
        self.row = np.asarray(row, dtype=np.int64)
        self.col = np.asarray(col, dtype=np.int64)
        self.u = np.asarray(u, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        n = len(self.i)
        for name in ("j", "row", "col", "u", "v"):
            if len(getattr(self, name)) != n:
                raise DatasetError(
                    f"pose {pose_id}: observation arrays disagree in length",
                    field=f"poses[{pose_id}]",
                )
        if n == 0:
            raise DatasetError(
                f"pose {pose_id} has no observations", field=f"poses[{pose_id}]"
            )
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise DatasetError(
                f"pose {pose_id}: non-finite pixel coordinates",
                field=f"poses[{pose_id}]",
            )

    def __len__(self) -> int:
        return len(self.i)

    def point_index(self, board: BoardSpec) -> npt.NDArray[np.int64]:
        return self.row * board.cols + self.col

    def validate_against(self, board: BoardSpec) -> None:
        if np.any(self.row < 0) or np.any(self.row >= board.rows):
            raise DatasetError(
                f"pose {self.pose_id}: corner row out of board range",
                field=f"poses[{self.pose_id}]",
            )
        if np.any(self.col < 0) or np.any(self.col >= board.cols):
            raise DatasetError(
                f"pose {self.pose_id}: corner col out of board range",
                field=f"poses[{self.pose_id}]",
            )
        keys = np.stack([self.i, self.j, self.row, self.col], axis=1)
        if np.unique(keys, axis=0).shape[0] != keys.shape[0]:
            raise DatasetError(
                f"pose {self.pose_id}: duplicate (view, corner) observation",
                field=f"poses[{self.pose_id}]",
            )


class CalibrationDataset:
    """Board geometry plus per-pose, per-view corner observations."""

    __slots__ = ("board", "camera_kind", "view_grid", "poses", "rectified")

    def __init__(
        self,
        board: BoardSpec,
        camera_kind: CameraKind,
        view_grid: ViewGrid,
        poses: list[PoseObservations],
        rectified: bool = False,
    ) -> None:
        self.board = board
        self.camera_kind = camera_kind
        self.view_grid = view_grid
        self.poses = list(poses)
        self.rectified = bool(rectified)
        ids = [p.pose_id for p in self.poses]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate pose_id in dataset", field="poses")
        for p in self.poses:
            p.validate_against(board)

    @property
    def n_poses(self) -> int:
        return len(self.poses)

    @property
    def pose_ids(self) -> list[int]:
        return [p.pose_id for p in self.poses]

    @property
    def n_observations(self) -> int:
        return sum(len(p) for p in self.poses)

    def to_json_dict(self) -> dict[str, Any]:
        poses_out = []
        for p in self.poses:
            views: dict[tuple[int, int], list[dict[str, Any]]] = {}
            for i, j, row, col, u, v in zip(p.i, p.j, p.row, p.col, p.u, p.v):
                views.setdefault((int(i), int(j)), []).append(
                    {"row": int(row), "col": int(col), "u": float(u), "v": float(v)}
                )
            poses_out.append(
                {
                    "pose_id": p.pose_id,
                    "observations": [
                        {"i": i, "j": j, "corners": corners}
                        for (i, j), corners in sorted(views.items())
                    ],
                }
            )
        return {
            "schema": SCHEMA_DATASET,
            "board": self.board.to_json_dict(),
            "camera_kind": self.camera_kind.value,
            "view_grid": self.view_grid.to_json_dict(),
            "rectified": self.rectified,
            "poses": poses_out,
        }

    @classmethod
    def from_json_dict(cls, d: Any) -> "CalibrationDataset":
        schema = _get(d, "schema", "")
        if schema != SCHEMA_DATASET:
            raise DatasetError(
                f"unexpected dataset schema {schema!r}", field="schema"
            )
        board = BoardSpec.from_json_dict(_get(d, "board", ""))
        kind = _parse_kind(_get(d, "camera_kind", ""))
        poses = []
        i_seen: set[int] = set()
        j_seen: set[int] = set()
        for p_idx, p in enumerate(_get(d, "poses", "")):
            path = f"poses[{p_idx}]"
            i_l: list[int] = []
            j_l: list[int] = []
            row_l: list[int] = []
            col_l: list[int] = []
            u_l: list[float] = []
            v_l: list[float] = []
            for o_idx, ob in enumerate(_get(p, "observations", path)):
                opath = f"{path}.observations[{o_idx}]"
                i = int(_get(ob, "i", opath))
                j = int(_get(ob, "j", opath))
                i_seen.add(i)
                j_seen.add(j)
                for c_idx, c in enumerate(_get(ob, "corners", opath)):
                    cpath = f"{opath}.corners[{c_idx}]"
                    i_l.append(i)
                    j_l.append(j)
                    row_l.append(int(_get(c, "row", cpath)))
                    col_l.append(int(_get(c, "col", cpath)))
                    u_l.append(float(_get(c, "u", cpath)))
                    v_l.append(float(_get(c, "v", cpath)))
            poses.append(
                PoseObservations(
                    int(_get(p, "pose_id", path)), i_l, j_l, row_l, col_l, u_l, v_l
                )
            )
        # the observations are authoritative for the realized grid; the
        # serialized i_range/j_range only record its span
        vg = _get(d, "view_grid", "")
        if i_seen and j_seen:
            grid = ViewGrid(tuple(sorted(i_seen)), tuple(sorted(j_seen)))
        else:
            i_lo, i_hi = (int(k) for k in _get(vg, "i_range", "view_grid"))
            j_lo, j_hi = (int(k) for k in _get(vg, "j_range", "view_grid"))
            grid = ViewGrid(
                tuple(range(i_lo, i_hi + 1)), tuple(range(j_lo, j_hi + 1))
            )
        return cls(board, kind, grid, poses, rectified=bool(d.get("rectified", False)))

    def save(self, path: str | Path) -> None:
        _dump_json(self.to_json_dict(), path)

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationDataset":
        return cls.from_json_dict(_load_json(path))

    def iter_flat(self) -> Iterator[tuple[PoseObservations, npt.NDArray[np.int64]]]:
        """Pose blocks paired with their flat board-point indices."""
        for p in self.poses:
            yield p, p.point_index(self.board)


def _parse_kind(value: Any) -> CameraKind:
    try:
        return CameraKind(value)
    except ValueError:
        options = ", ".join(k.value for k in CameraKind)
        raise DatasetError(
            f"unknown camera_kind {value!r}; expected one of: {options}",
            field="camera_kind",
        ) from None


@dataclasses.dataclass(frozen=True, slots=True)
class StageMetrics:
    """Error summary of one pipeline stage."""

    rms_px: float
    mean_px: float
    rms_ray_mm: float

    def to_json_dict(self) -> dict[str, float]:
        return {
            "rms_px": float(self.rms_px),
            "mean_px": float(self.mean_px),
            "rms_ray_mm": float(self.rms_ray_mm),
        }

    @classmethod
    def from_json_dict(cls, d: Any, path: str) -> "StageMetrics":
        return cls(
            rms_px=float(_get(d, "rms_px", path)),
            mean_px=float(_get(d, "mean_px", path)),
            rms_ray_mm=float(_get(d, "rms_ray_mm", path)),
        )


@dataclasses.dataclass(frozen=True, slots=True)
class RefinementReport:
    """Outcome of the damped least-squares refinement."""

    initial_cost: float
    final_cost: float
    n_iter: int
    termination: str

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "initial_cost": float(self.initial_cost),
            "final_cost": float(self.final_cost),
            "n_iter": int(self.n_iter),
            "termination": self.termination,
        }

    @classmethod
    def from_json_dict(cls, d: Any, path: str) -> "RefinementReport":
        return cls(
            initial_cost=float(_get(d, "initial_cost", path)),
            final_cost=float(_get(d, "final_cost", path)),
            n_iter=int(_get(d, "n_iter", path)),
            termination=str(_get(d, "termination", path)),
        )


@dataclasses.dataclass(frozen=True)
class CalibrationResult:
    """Calibrated parameters, per-pose extrinsics, and error metrics.

    Doubles as the ground-truth sidecar format, where metrics and the
    refinement report are null.
    """

    camera_kind: CameraKind
    intrinsics: Intrinsics
    distortion: Distortion
    pose_ids: tuple[int, ...]
    poses: tuple[Pose, ...]
    metrics_initial: StageMetrics | None = None
    metrics_optimized: StageMetrics | None = None
    refinement: RefinementReport | None = None
    tool_version: str = ""
    input_digest: str | None = None

    def __post_init__(self) -> None:
        if len(self.pose_ids) != len(self.poses):
            raise DatasetError("pose_ids and poses disagree in length", field="poses")
        if self.metrics_initial is not None and self.metrics_optimized is not None:
            if self.metrics_optimized.rms_px > self.metrics_initial.rms_px:
                raise DatasetError(
                    "optimized rms_px exceeds initial rms_px", field="metrics"
                )

    def to_json_dict(self) -> dict[str, Any]:
        ik = self.intrinsics
        dk = self.distortion
        metrics: dict[str, Any] = {}
        if self.metrics_initial is not None:
            metrics["initial"] = self.metrics_initial.to_json_dict()
        if self.metrics_optimized is not None:
            metrics["optimized"] = self.metrics_optimized.to_json_dict()
        return {
            "schema": SCHEMA_RESULT,
            "tool_version": self.tool_version,
            "input_digest": self.input_digest,
            "camera_kind": self.camera_kind.value,
            "intrinsics": {
                "ki": float(ik.ki),
                "kj": float(ik.kj),
                "ku": float(ik.ku),
                "kv": float(ik.kv),
                "u0": float(ik.u0),
                "v0": float(ik.v0),
            },
            "distortion": {
                "k1": float(dk.k1),
                "k2": float(dk.k2),
                "k3": float(dk.k3),
                "k4": float(dk.k4),
            },
            "poses": [
                {
                    "pose_id": int(pid),
                    "rotation": [float(w) for w in pose.rotation],
                    "translation_mm": [float(t * MM_PER_M) for t in pose.translation],
                }
                for pid, pose in zip(self.pose_ids, self.poses)
            ],
            "metrics": metrics or None,
            "refinement": (
                self.refinement.to_json_dict() if self.refinement else None
            ),
        }

    @classmethod
    def from_json_dict(cls, d: Any) -> "CalibrationResult":
        schema = _get(d, "schema", "")
        if schema != SCHEMA_RESULT:
            raise DatasetError(f"unexpected result schema {schema!r}", field="schema")
        ik = _get(d, "intrinsics", "")
        intr = Intrinsics(
            ki=float(_get(ik, "ki", "intrinsics")),
            kj=float(_get(ik, "kj", "intrinsics")),
            ku=float(_get(ik, "ku", "intrinsics")),
            kv=float(_get(ik, "kv", "intrinsics")),
            u0=float(_get(ik, "u0", "intrinsics")),
            v0=float(_get(ik, "v0", "intrinsics")),
        )
        dk = _get(d, "distortion", "")
        dist = Distortion(
            k1=float(_get(dk, "k1", "distortion")),
            k2=float(_get(dk, "k2", "distortion")),
            k3=float(_get(dk, "k3", "distortion")),
            k4=float(_get(dk, "k4", "distortion")),
        )
        pose_ids: list[int] = []
        poses: list[Pose] = []
        for p_idx, p in enumerate(_get(d, "poses", "")):
            path = f"poses[{p_idx}]"
            pose_ids.append(int(_get(p, "pose_id", path)))
            t_mm = np.asarray(_get(p, "translation_mm", path), dtype=np.float64)
            poses.append(
                Pose(
                    rotation=np.asarray(_get(p, "rotation", path), dtype=np.float64),
                    translation=t_mm / MM_PER_M,
                )
            )
        metrics = d.get("metrics") or {}
        m_init = (
            StageMetrics.from_json_dict(metrics["initial"], "metrics.initial")
            if "initial" in metrics
            else None
        )
        m_opt = (
            StageMetrics.from_json_dict(metrics["optimized"], "metrics.optimized")
            if "optimized" in metrics
            else None
        )
        ref = d.get("refinement")
        report = (
            RefinementReport.from_json_dict(ref, "refinement") if ref else None
        )
        return cls(
            camera_kind=_parse_kind(_get(d, "camera_kind", "")),
            intrinsics=intr,
            distortion=dist,
            pose_ids=tuple(pose_ids),
            poses=tuple(poses),
            metrics_initial=m_init,
            metrics_optimized=m_opt,
            refinement=report,
            tool_version=str(d.get("tool_version", "")),
            input_digest=d.get("input_digest"),
        )

    def save(self, path: str | Path) -> None:
        _dump_json(self.to_json_dict(), path)

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationResult":
        return cls.from_json_dict(_load_json(path))


def _dump_json(obj: dict[str, Any], path: str | Path) -> None:
    text = json.dumps(obj, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _load_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e


def file_digest(path: str | Path) -> str:
    """Stable content digest used to tie results to their input dataset."""
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return f"sha256:{h.hexdigest()}"


def rectify_dataset(
    dataset: CalibrationDataset,
    intrinsics: Intrinsics,
    distortion: Distortion,
) -> CalibrationDataset:
    """Replace pixel coordinates with their distortion-free positions.

    Each observation is decoded, mapped through the inverse distortion
    model, and encoded back to pixels.  Rectifying an already rectified
    dataset applies the correction twice; it is not idempotent.
    """
    ik = intrinsics
    new_poses = []
    for p in dataset.poses:
        s = ik.ki * p.i.astype(np.float64)
        t = ik.kj * p.j.astype(np.float64)
        x = ik.ku * p.u + ik.u0
        y = ik.kv * p.v + ik.v0
        xu, yu = undistort(x, y, s, t, distortion)
        new_poses.append(
            PoseObservations(
                pose_id=p.pose_id,
                i=p.i,
                j=p.j,
                row=p.row,
                col=p.col,
                u=(xu - ik.u0) / ik.ku,
                v=(yu - ik.v0) / ik.kv,
            )
        )
    return CalibrationDataset(
        board=dataset.board,
        camera_kind=dataset.camera_kind,
        view_grid=dataset.view_grid,
        poses=new_poses,
        rectified=True,
    )
