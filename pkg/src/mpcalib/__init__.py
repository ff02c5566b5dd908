"""Multi-projection-center camera model and calibration pipeline.

A camera is modeled as a grid of views indexed by (i, j), each with its own
projection center on the view plane, sharing one image plane with pixel
coordinates (u, v).  Six intrinsic parameters map indices and pixels to ray
coordinates; calibration recovers them together with per-pose board
extrinsics and a four-parameter distortion model, first in closed form and
then by joint nonlinear refinement.
"""

from ._version import __version__
from .camera import (
    CameraKind,
    Distortion,
    Intrinsics,
    PixelIndex,
    Pose,
    decode,
    decode_arrays,
    distort,
    encode,
    encode_arrays,
    undistort,
)
from .dataset import (
    BoardSpec,
    CalibrationDataset,
    CalibrationResult,
    PoseObservations,
    RefinementReport,
    StageMetrics,
    ViewGrid,
    file_digest,
    rectify_dataset,
    view_axis,
)
from .estimator import MPCCalibrator
from .exceptions import (
    AllPointsBehindCamera,
    AspectMismatch,
    CalibrationError,
    ConfigError,
    DatasetError,
    DegenerateBoard,
    DegenerateProjection,
    GeometryError,
    InsufficientPoses,
    InsufficientRays,
    InvalidIntrinsics,
    InvalidSpacing,
    MpcalibError,
    NoConvergence,
    NonFinite,
    NoParallax,
    NotPositiveDefinite,
    NullspaceAmbiguous,
    ParallelRays,
    RankDeficient,
    SimulationError,
    ZeroScale,
)
from .geometry import (
    Ray,
    intersect_two_rays,
    measurement_rows,
    nearest_rotation,
    project,
    rodrigues,
    rodrigues_inv,
    rotation_jacobian,
    skew,
    triangulate,
    triangulate_many,
)
from .linear import (
    estimate_homography,
    extrinsics_from_homography,
    intrinsics_from_gram,
    linear_calibrate,
    solve_gram_vector,
    solve_view_scales,
)
from .metrics import MetricReport, compute_metrics, export_poses, read_pose_export
from .refine import refine_calibration
from .simulate import (
    SimConfig,
    TrialBatch,
    TrialResult,
    euler_rotation_vector,
    generate,
    run_trials,
    write_trial_csv,
)
from .transforms import (
    apply_point_transform,
    offset_ray,
    plane_respacing,
    point_transform_from_intrinsics,
    ray_offset_transform,
    ray_scaling_transform,
    respace_ray,
    scale_ray,
)

__all__ = [
    "__version__",
    "AllPointsBehindCamera",
    "AspectMismatch",
    "BoardSpec",
    "CalibrationDataset",
    "CalibrationError",
    "CalibrationResult",
    "CameraKind",
    "ConfigError",
    "DatasetError",
    "DegenerateBoard",
    "DegenerateProjection",
    "Distortion",
    "GeometryError",
    "InsufficientPoses",
    "InsufficientRays",
    "Intrinsics",
    "InvalidIntrinsics",
    "InvalidSpacing",
    "MetricReport",
    "MPCCalibrator",
    "MpcalibError",
    "NoConvergence",
    "NonFinite",
    "NoParallax",
    "NotPositiveDefinite",
    "NullspaceAmbiguous",
    "ParallelRays",
    "PixelIndex",
    "Pose",
    "PoseObservations",
    "RankDeficient",
    "Ray",
    "RefinementReport",
    "SimConfig",
    "SimulationError",
    "StageMetrics",
    "TrialBatch",
    "TrialResult",
    "ViewGrid",
    "ZeroScale",
    "apply_point_transform",
    "compute_metrics",
    "decode",
    "decode_arrays",
    "distort",
    "encode",
    "encode_arrays",
    "estimate_homography",
    "euler_rotation_vector",
    "export_poses",
    "extrinsics_from_homography",
    "file_digest",
    "generate",
    "intersect_two_rays",
    "intrinsics_from_gram",
    "linear_calibrate",
    "measurement_rows",
    "nearest_rotation",
    "offset_ray",
    "plane_respacing",
    "point_transform_from_intrinsics",
    "project",
    "ray_offset_transform",
    "ray_scaling_transform",
    "read_pose_export",
    "rectify_dataset",
    "refine_calibration",
    "respace_ray",
    "rodrigues",
    "rodrigues_inv",
    "rotation_jacobian",
    "run_trials",
    "scale_ray",
    "skew",
    "solve_gram_vector",
    "solve_view_scales",
    "triangulate",
    "triangulate_many",
    "undistort",
    "view_axis",
    "write_trial_csv",
]
