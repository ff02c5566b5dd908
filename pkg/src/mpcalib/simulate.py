"""Synthetic calibration data at desk scale.

Renders a planar board through the multi-view projection model: for every
view of every pose each corner is projected onto the image plane, warped by
the forward distortion model, converted to pixel coordinates, and optionally
perturbed with independent Gaussian pixel noise.  Board poses are sampled
uniformly inside configurable rotation and translation ranges, or pinned
exactly with the fixed-pose fields.  A trial harness repeats
generate-and-calibrate runs with independently seeded streams and summarizes
parameter errors.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .camera import CameraKind, Distortion, Intrinsics, Pose, distort
from .dataset import (
    BoardSpec,
    CalibrationDataset,
    CalibrationResult,
    PoseObservations,
    ViewGrid,
    _get,
    _parse_kind,
)
from .exceptions import (
    AllPointsBehindCamera,
    CalibrationError,
    ConfigError,
    GeometryError,
    InvalidIntrinsics,
    NoConvergence,
    NonFinite,
)
from .geometry import FloatArray, rodrigues_inv
from .linear import linear_calibrate
from .metrics import compute_metrics
from .refine import refine_calibration

MAX_POSE_ATTEMPTS = 100
PARAM_NAMES = ("ki", "kj", "ku", "kv", "u0", "v0")

__all__ = [
    "PARAM_NAMES",
    "SimConfig",
    "euler_rotation_vector",
    "generate",
    "TrialResult",
    "TrialBatch",
    "run_trials",
    "write_trial_csv",
]


def euler_rotation_vector(angles_deg: Sequence[float]) -> FloatArray:
    """Rotation vector for X-Y-Z Euler angles in degrees (R = Rx Ry Rz)."""
    ax, ay, az = (math.radians(float(a)) for a in angles_deg)
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return rodrigues_inv(rx @ ry @ rz)


def _check_range(name: str, rng: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(rng[0]), float(rng[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ConfigError(f"invalid range {rng} for {name}", field=name)
    return lo, hi


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Everything needed to synthesize one calibration dataset.

    Translation ranges are millimeters; ``tz_range_mm`` holds magnitudes
    (both positive) and the sign follows the camera kind.  Fixed rotations
    are X-Y-Z Euler angles in degrees, fixed translations millimeters; when
    given they must cover every pose and are used verbatim.
    """

    intrinsics: Intrinsics
    board: BoardSpec
    n_poses: int
    view_shape: tuple[int, int]
    noise_sigma_px: float = 0.0
    distortion: Distortion = dataclasses.field(default_factory=Distortion)
    camera_kind: CameraKind = CameraKind.CONVENTIONAL
    rotation_range_deg: float = 30.0
    tx_range_mm: tuple[float, float] = (-40.0, 40.0)
    ty_range_mm: tuple[float, float] = (-40.0, 40.0)
    tz_range_mm: tuple[float, float] = (120.0, 280.0)
    seed: int | None = None
    fixed_rotations_deg: tuple[tuple[float, float, float], ...] | None = None
    fixed_translations_mm: tuple[tuple[float, float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.n_poses < 1:
            raise ConfigError(
                f"n_poses must be at least 1, got {self.n_poses}", field="n_poses"
            )
        if len(self.view_shape) != 2 or min(self.view_shape) < 2:
            raise ConfigError(
                f"view_shape needs two entries >= 2, got {self.view_shape}",
                field="view_shape",
            )
        if not (math.isfinite(self.noise_sigma_px) and self.noise_sigma_px >= 0.0):
            raise ConfigError(
                f"noise_sigma_px must be >= 0, got {self.noise_sigma_px}",
                field="noise_sigma_px",
            )
        if not (0.0 < self.rotation_range_deg < 90.0):
            raise ConfigError(
                "rotation_range_deg must lie in (0, 90), got "
                f"{self.rotation_range_deg}",
                field="rotation_range_deg",
            )
        _check_range("tx_range_mm", self.tx_range_mm)
        _check_range("ty_range_mm", self.ty_range_mm)
        lo, _ = _check_range("tz_range_mm", self.tz_range_mm)
        if lo <= 0.0:
            raise ConfigError(
                "tz_range_mm holds magnitudes and must be positive, got "
                f"{self.tz_range_mm}",
                field="tz_range_mm",
            )
        for name, fixed in (
            ("fixed_rotations_deg", self.fixed_rotations_deg),
            ("fixed_translations_mm", self.fixed_translations_mm),
        ):
            if fixed is not None:
                if len(fixed) != self.n_poses:
                    raise ConfigError(
                        f"{name} must list one entry per pose "
                        f"({self.n_poses}), got {len(fixed)}",
                        field=name,
                    )
                if any(len(entry) != 3 for entry in fixed):
                    raise ConfigError(
                        f"each {name} entry needs 3 components", field=name
                    )

    def to_json_dict(self) -> dict[str, Any]:
        ik = self.intrinsics
        dk = self.distortion
        out: dict[str, Any] = {
            "intrinsics": {
                "ki": ik.ki, "kj": ik.kj, "ku": ik.ku,
                "kv": ik.kv, "u0": ik.u0, "v0": ik.v0,
            },
            "board": self.board.to_json_dict(),
            "camera_kind": self.camera_kind.value,
            "n_poses": self.n_poses,
            "view_shape": list(self.view_shape),
            "noise_sigma_px": self.noise_sigma_px,
            "distortion": {"k1": dk.k1, "k2": dk.k2, "k3": dk.k3, "k4": dk.k4},
            "rotation_range_deg": self.rotation_range_deg,
            "tx_range_mm": list(self.tx_range_mm),
            "ty_range_mm": list(self.ty_range_mm),
            "tz_range_mm": list(self.tz_range_mm),
            "seed": self.seed,
        }
        if self.fixed_rotations_deg is not None:
            out["fixed_rotations_deg"] = [list(r) for r in self.fixed_rotations_deg]
        if self.fixed_translations_mm is not None:
            out["fixed_translations_mm"] = [
                list(t) for t in self.fixed_translations_mm
            ]
        return out

    @classmethod
    def from_json_dict(cls, d: Any) -> "SimConfig":
        ik = _get(d, "intrinsics", "")
        intr = Intrinsics(
            ki=float(_get(ik, "ki", "intrinsics")),
            kj=float(_get(ik, "kj", "intrinsics")),
            ku=float(_get(ik, "ku", "intrinsics")),
            kv=float(_get(ik, "kv", "intrinsics")),
            u0=float(_get(ik, "u0", "intrinsics")),
            v0=float(_get(ik, "v0", "intrinsics")),
        )
        dk = d.get("distortion") or {}
        dist = Distortion(
            k1=float(dk.get("k1", 0.0)),
            k2=float(dk.get("k2", 0.0)),
            k3=float(dk.get("k3", 0.0)),
            k4=float(dk.get("k4", 0.0)),
        )
        view_shape = _get(d, "view_shape", "")
        kwargs: dict[str, Any] = {}
        for name in ("rotation_range_deg", "noise_sigma_px"):
            if name in d:
                kwargs[name] = float(d[name])
        for name in ("tx_range_mm", "ty_range_mm", "tz_range_mm"):
            if name in d:
                kwargs[name] = (float(d[name][0]), float(d[name][1]))
        for name in ("fixed_rotations_deg", "fixed_translations_mm"):
            if d.get(name) is not None:
                kwargs[name] = tuple(
                    tuple(float(x) for x in entry) for entry in d[name]
                )
        seed = d.get("seed")
        return cls(
            intrinsics=intr,
            board=BoardSpec.from_json_dict(_get(d, "board", "")),
            n_poses=int(_get(d, "n_poses", "")),
            view_shape=(int(view_shape[0]), int(view_shape[1])),
            distortion=dist,
            camera_kind=_parse_kind(d.get("camera_kind", "conventional")),
            seed=None if seed is None else int(seed),
            **kwargs,
        )


def _sample_pose(config: SimConfig, rng: np.random.Generator, p: int) -> Pose:
    fixed_r = config.fixed_rotations_deg
    fixed_t = config.fixed_translations_mm
    if fixed_r is not None:
        w = euler_rotation_vector(fixed_r[p])
    else:
        lim = config.rotation_range_deg
        w = euler_rotation_vector(rng.uniform(-lim, lim, size=3))
    if fixed_t is not None:
        t_mm = np.asarray(fixed_t[p], dtype=np.float64)
    else:
        tz_sign = 1.0 if config.camera_kind.positive_tz else -1.0
        t_mm = np.array(
            [
                rng.uniform(*config.tx_range_mm),
                rng.uniform(*config.ty_range_mm),
                tz_sign * rng.uniform(*config.tz_range_mm),
            ]
        )
    return Pose(rotation=w, translation=t_mm / 1000.0)


def _depths_valid(pc: FloatArray, kind: CameraKind) -> bool:
    zc = pc[:, 2]
    if kind.positive_tz:
        return bool(np.all(zc > 1e-9))
    return bool(np.all(zc < -1e-9))


def generate(config: SimConfig) -> tuple[CalibrationDataset, CalibrationResult]:
    """Synthesize a dataset and its ground-truth sidecar."""
    rng = np.random.default_rng(config.seed)
    board3 = config.board.corner_points_3d()
    ik = config.intrinsics
    grid = ViewGrid.from_shape(*config.view_shape)
    i_vals = np.asarray(grid.i_values, dtype=np.int64)
    j_vals = np.asarray(grid.j_values, dtype=np.int64)
    ii, jj = np.meshgrid(i_vals, j_vals, indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    s_views = ik.ki * ii.astype(np.float64)
    t_views = ik.kj * jj.astype(np.float64)

    poses_fixed = (
        config.fixed_rotations_deg is not None
        and config.fixed_translations_mm is not None
    )
    attempts_allowed = 1 if poses_fixed else MAX_POSE_ATTEMPTS

    true_poses: list[Pose] = []
    pose_obs: list[PoseObservations] = []
    n_corners = config.board.n_corners
    rows = np.arange(n_corners) // config.board.cols
    cols = np.arange(n_corners) % config.board.cols

    for p in range(config.n_poses):
        pose = None
        pc = None
        for _ in range(attempts_allowed):
            cand = _sample_pose(config, rng, p)
            pc_cand = cand.apply(board3)
            if _depths_valid(pc_cand, config.camera_kind):
                pose = cand
                pc = pc_cand
                break
        if pose is None or pc is None:
            raise AllPointsBehindCamera(
                f"pose {p}: no sample with the full board in front of the "
                f"view plane after {attempts_allowed} attempt(s)"
            )
        true_poses.append(pose)

        # ideal rectified rays for every (view, corner) pair
        zc = pc[:, 2]
        xu = (pc[None, :, 0] - s_views[:, None]) / zc[None, :]
        yu = (pc[None, :, 1] - t_views[:, None]) / zc[None, :]
        x, y = distort(
            xu, yu, s_views[:, None], t_views[:, None], config.distortion
        )
        u = (x - ik.u0) / ik.ku
        v = (y - ik.v0) / ik.kv
        if config.noise_sigma_px > 0.0:
            u = u + rng.normal(0.0, config.noise_sigma_px, size=u.shape)
            v = v + rng.normal(0.0, config.noise_sigma_px, size=v.shape)

        n_views = len(ii)
        pose_obs.append(
            PoseObservations(
                pose_id=p,
                i=np.repeat(ii, n_corners),
                j=np.repeat(jj, n_corners),
                row=np.tile(rows, n_views),
                col=np.tile(cols, n_views),
                u=u.ravel(),
                v=v.ravel(),
            )
        )

    dataset = CalibrationDataset(
        board=config.board,
        camera_kind=config.camera_kind,
        view_grid=grid,
        poses=pose_obs,
        rectified=False,
    )
    truth = CalibrationResult(
        camera_kind=config.camera_kind,
        intrinsics=config.intrinsics,
        distortion=config.distortion,
        pose_ids=tuple(range(config.n_poses)),
        poses=tuple(true_poses),
    )
    return dataset, truth


@dataclasses.dataclass(frozen=True, slots=True)
class TrialResult:
    """One generate-and-calibrate run."""

    seed: int
    error: str | None
    rel_err: dict[str, float] | None
    pp_err_px: float | None
    rms_initial_px: float | None
    rms_optimized_px: float | None

    @property
    def ok(self) -> bool:
        return self.error is None


class TrialBatch:
    """Trial results for one configuration."""

    __slots__ = ("config", "results")

    def __init__(self, config: SimConfig, results: list[TrialResult]):
        self.config = config
        self.results = results

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.results if not r.ok)

    @property
    def fail_rate(self) -> float:
        return self.n_failed / len(self.results) if self.results else 0.0

    def rel_err_arrays(self) -> dict[str, FloatArray]:
        ok = [r for r in self.results if r.ok]
        return {
            name: np.array([r.rel_err[name] for r in ok]) for name in PARAM_NAMES
        }

    def mean_rel_err(self) -> dict[str, float]:
        return {k: float(v.mean()) for k, v in self.rel_err_arrays().items()}


def _relative_errors(estimated: Intrinsics, truth: Intrinsics) -> dict[str, float]:
    out = {}
    for name in PARAM_NAMES:
        true_val = getattr(truth, name)
        out[name] = abs(getattr(estimated, name) - true_val) / abs(true_val)
    return out


def run_trials(
    config: SimConfig,
    n_trials: int,
    refine: bool = True,
) -> TrialBatch:
    """Repeat generate-and-calibrate ``n_trials`` times.

    Each trial reseeds the generator from an independently spawned stream,
    so trials are reproducible given ``config.seed`` and independent of each
    other.  Calibration failures are recorded, not raised.
    """
    children = np.random.SeedSequence(config.seed).spawn(n_trials)
    results: list[TrialResult] = []
    for child in children:
        seed = int(child.generate_state(1)[0])
        trial_config = dataclasses.replace(config, seed=seed)
        dataset, truth = generate(trial_config)
        try:
            intr, poses = linear_calibrate(dataset)
            report_initial = compute_metrics(dataset, intr, Distortion(), poses)
            rms_opt = None
            if refine:
                intr, dist, poses, _ = refine_calibration(dataset, intr, poses)
                report_opt = compute_metrics(dataset, intr, dist, poses)
                rms_opt = report_opt.rms_px
        except (
            CalibrationError,
            GeometryError,
            NoConvergence,
            NonFinite,
            InvalidIntrinsics,
        ) as e:
            # anything the fitting pipeline can throw counts as a failed
            # trial; dataset or config errors still propagate
            results.append(
                TrialResult(
                    seed=seed,
                    error=f"{type(e).__name__}: {e}",
                    rel_err=None,
                    pp_err_px=None,
                    rms_initial_px=None,
                    rms_optimized_px=None,
                )
            )
            continue
        pp_est = np.asarray(intr.principal_point_px)
        pp_true = np.asarray(truth.intrinsics.principal_point_px)
        results.append(
            TrialResult(
                seed=seed,
                error=None,
                rel_err=_relative_errors(intr, truth.intrinsics),
                pp_err_px=float(np.linalg.norm(pp_est - pp_true)),
                rms_initial_px=report_initial.rms_px,
                rms_optimized_px=rms_opt,
            )
        )
    return TrialBatch(config, results)


def write_trial_csv(path: str | Path, batches: list[TrialBatch]) -> None:
    """Summarize trial batches as one CSV row per (configuration, parameter)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "sigma", "n_poses", "n_views", "param",
                "mean_rel_err", "std_rel_err", "fail_rate",
            ]
        )
        for batch in batches:
            cfg = batch.config
            n_views = cfg.view_shape[0] * cfg.view_shape[1]
            arrays = batch.rel_err_arrays()
            for name in PARAM_NAMES:
                vals = arrays[name]
                writer.writerow(
                    [
                        cfg.noise_sigma_px,
                        cfg.n_poses,
                        n_views,
                        name,
                        float(vals.mean()) if len(vals) else "",
                        float(vals.std()) if len(vals) else "",
                        batch.fail_rate,
                    ]
                )
