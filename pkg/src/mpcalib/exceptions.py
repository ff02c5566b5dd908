"""Exception hierarchy for mpcalib.

Every error raised by this package derives from MpcalibError so callers can
catch the whole family with one clause.  Subclasses are grouped by the stage
that raises them; the CLI maps them onto stable exit codes.
"""

from __future__ import annotations


class MpcalibError(Exception):
    """Base class for all mpcalib errors."""


class GeometryError(MpcalibError):
    """Base class for ray/point geometry failures."""


class DegenerateProjection(GeometryError):
    """Point lies on (or numerically too close to) the view plane Z = 0."""


class ParallelRays(GeometryError):
    """Two rays with equal direction offsets; no finite intersection."""


class RankDeficient(GeometryError):
    """A homogeneous system does not determine its solution uniquely."""


class InvalidSpacing(MpcalibError):
    """Plane spacing f must be positive and finite."""


class AspectMismatch(MpcalibError):
    """Ray scaling with k_s/k_t != k_x/k_y has no consistent point transform."""


class InvalidIntrinsics(MpcalibError):
    """Intrinsic parameters violate their invariants (zero scale, non-finite)."""


class NoConvergence(MpcalibError):
    """An iterative inversion failed to reach tolerance within max_iter."""


class NonFinite(MpcalibError):
    """Residuals or derivatives produced NaN/inf values."""


class CalibrationError(MpcalibError):
    """Base class for failures of the calibration pipeline."""


class DegenerateBoard(CalibrationError):
    """Usable board points are collinear; homography is underdetermined."""


class InsufficientRays(CalibrationError):
    """Too few points with at least two rays from distinct views."""


class InsufficientPoses(CalibrationError):
    """Dataset holds fewer poses than the pipeline minimum."""


class NullspaceAmbiguous(CalibrationError):
    """Homography system has more than one near-null direction."""


class NotPositiveDefinite(CalibrationError):
    """Recovered Gram matrix is not positive definite; add poses or reduce noise."""


class ZeroScale(CalibrationError):
    """Homography decomposition produced a vanishing scale factor."""


class NoParallax(CalibrationError):
    """All usable view indices are zero; view-plane scale unobservable."""


class DatasetError(MpcalibError):
    """Structurally invalid dataset, config, or result content.

    The optional ``field`` names the offending entry for CLI diagnostics.
    """

    def __init__(self, message: str, *, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field


class ConfigError(DatasetError):
    """Invalid simulation or command configuration."""


class SimulationError(MpcalibError):
    """Synthetic data generation failed."""


class AllPointsBehindCamera(SimulationError):
    """A sampled pose left no board corner in front of the camera."""
