"""Argument normalization shared by the estimator and the CLI."""

from __future__ import annotations

from pathlib import Path

from .camera import CameraKind
from .dataset import CalibrationDataset, _parse_kind

__all__ = ["as_dataset", "as_camera_kind"]


def as_dataset(x: CalibrationDataset | str | Path) -> CalibrationDataset:
    """Accept a dataset object or a path to a serialized one."""
    if isinstance(x, CalibrationDataset):
        return x
    if isinstance(x, (str, Path)):
        return CalibrationDataset.load(x)
    raise TypeError(
        f"expected a CalibrationDataset or a path, got {type(x).__name__}"
    )


def as_camera_kind(
    value: CameraKind | str | None, default: CameraKind | None = None
) -> CameraKind | None:
    """Accept a CameraKind, its string value, or None for the default."""
    if value is None:
        return default
    if isinstance(value, CameraKind):
        return value
    return _parse_kind(value)
