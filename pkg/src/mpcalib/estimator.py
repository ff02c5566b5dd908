"""Calibration pipeline wrapped as a scikit-learn estimator.

``fit`` consumes a CalibrationDataset (or a path to one) and runs the
closed-form initialization followed, by default, by the joint nonlinear
refinement.  ``transform`` rectifies a dataset with the fitted distortion,
``predict`` renders the model's pixel coordinates for a dataset's
observation structure, and ``score`` is the negated component RMS error in
pixels, so higher is better.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._version import __version__
from .camera import CameraKind, Distortion, Pose, distort
from .dataset import (
    CalibrationDataset,
    CalibrationResult,
    StageMetrics,
    rectify_dataset,
)
from .geometry import EPS_Z, FloatArray
from .exceptions import DegenerateProjection
from .linear import linear_calibrate
from .metrics import MetricReport, compute_metrics
from .refine import refine_calibration
from .validation import as_camera_kind, as_dataset

__all__ = ["MPCCalibrator"]


class MPCCalibrator(BaseEstimator):
    """Multi-projection-center camera calibrator.

    Parameters
    ----------
    camera_kind : str, CameraKind, or None
        Sign convention for board depths; None takes the dataset's value.
    refine : bool
        Run the nonlinear refinement after the closed-form stage.
    max_iter : int
        Iteration cap for the refinement.
    tol : float
        Relative cost-decrease threshold that stops the refinement.

    Attributes (after ``fit``)
    --------------------------
    intrinsics_ : Intrinsics
    distortion_ : Distortion (zeros when ``refine=False``)
    poses_ : list[Pose] aligned with ``pose_ids_``
    pose_ids_ : list[int]
    metrics_initial_ : MetricReport for the closed-form stage
    metrics_optimized_ : MetricReport or None
    report_ : RefinementReport or None
    n_iter_ : int
    """

    def __init__(
        self,
        camera_kind: CameraKind | str | None = None,
        refine: bool = True,
        max_iter: int = 200,
        tol: float = 1e-12,
    ):
        self.camera_kind = camera_kind
        self.refine = refine
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None) -> "MPCCalibrator":
        dataset = as_dataset(X)
        kind = as_camera_kind(self.camera_kind, dataset.camera_kind)
        intrinsics, poses = linear_calibrate(dataset, kind)
        self.camera_kind_ = kind
        self.metrics_initial_ = compute_metrics(
            dataset, intrinsics, Distortion(), poses
        )
        if self.refine:
            intrinsics, distortion, poses, report = refine_calibration(
                dataset,
                intrinsics,
                poses,
                max_iter=self.max_iter,
                tol_cost=self.tol,
            )
            self.metrics_optimized_: MetricReport | None = compute_metrics(
                dataset, intrinsics, distortion, poses
            )
            self.report_ = report
            self.n_iter_ = report.n_iter
        else:
            distortion = Distortion()
            self.metrics_optimized_ = None
            self.report_ = None
            self.n_iter_ = 0
        self.intrinsics_ = intrinsics
        self.distortion_ = distortion
        self.poses_ = list(poses)
        self.pose_ids_ = list(dataset.pose_ids)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "intrinsics_"):
            raise NotFittedError(
                "this MPCCalibrator is not fitted yet; call fit first"
            )

    def _pose_for(self, pose_id: int) -> Pose:
        try:
            return self.poses_[self.pose_ids_.index(pose_id)]
        except ValueError:
            raise ValueError(
                f"pose_id {pose_id} was not present during fit"
            ) from None

    def transform(self, X) -> CalibrationDataset:
        """Rectified copy of a dataset using the fitted distortion."""
        self._check_fitted()
        return rectify_dataset(as_dataset(X), self.intrinsics_, self.distortion_)

    def predict(self, X) -> FloatArray:
        """Model pixel coordinates for every observation in ``X``.

        Returns an (n_observations, 2) array in dataset iteration order.
        Every pose_id in ``X`` must have been fitted.
        """
        self._check_fitted()
        dataset = as_dataset(X)
        ik = self.intrinsics_
        board3 = dataset.board.corner_points_3d()
        out = []
        for pose_obs, pidx in dataset.iter_flat():
            pose = self._pose_for(pose_obs.pose_id)
            s = ik.ki * pose_obs.i.astype(np.float64)
            t = ik.kj * pose_obs.j.astype(np.float64)
            pc = pose.apply(board3)[pidx]
            zc = pc[:, 2]
            if np.any(np.abs(zc) < EPS_Z):
                raise DegenerateProjection(
                    f"pose {pose_obs.pose_id}: board corner on the view plane"
                )
            xu = (pc[:, 0] - s) / zc
            yu = (pc[:, 1] - t) / zc
            x, y = distort(xu, yu, s, t, self.distortion_)
            out.append(
                np.stack([(x - ik.u0) / ik.ku, (y - ik.v0) / ik.kv], axis=1)
            )
        return np.concatenate(out, axis=0)

    def score(self, X, y=None) -> float:
        """Negated component RMS reprojection error in pixels."""
        self._check_fitted()
        dataset = as_dataset(X)
        poses = [self._pose_for(p.pose_id) for p in dataset.poses]
        report = compute_metrics(dataset, self.intrinsics_, self.distortion_, poses)
        return -report.rms_px

    def to_result(self, input_digest: str | None = None) -> CalibrationResult:
        """Package the fitted parameters as a serializable result."""
        self._check_fitted()

        def stage(report: MetricReport | None) -> StageMetrics | None:
            if report is None:
                return None
            return StageMetrics(
                rms_px=report.rms_px,
                mean_px=report.mean_px,
                rms_ray_mm=report.rms_ray_mm,
            )

        return CalibrationResult(
            camera_kind=self.camera_kind_,
            intrinsics=self.intrinsics_,
            distortion=self.distortion_,
            pose_ids=tuple(self.pose_ids_),
            poses=tuple(self.poses_),
            metrics_initial=stage(self.metrics_initial_),
            metrics_optimized=stage(self.metrics_optimized_),
            refinement=self.report_,
            tool_version=__version__,
            input_digest=input_digest,
        )
