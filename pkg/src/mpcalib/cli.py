"""Command-line interface.

Subcommands: ``simulate`` renders a synthetic dataset from a JSON config,
``calibrate`` runs the pipeline on a dataset, ``evaluate`` scores a result
against a dataset (optionally against ground truth), and ``rectify``
rewrites a dataset with the fitted distortion removed.

Exit codes: 0 success, 2 bad input (config, dataset, or result files),
3 filesystem errors, 4 calibration or numerical failure, 5 when the
dataset and result files do not belong together.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ._version import __version__
from .camera import Distortion
from .dataset import (
    CalibrationDataset,
    CalibrationResult,
    StageMetrics,
    file_digest,
    rectify_dataset,
)
from .exceptions import (
    CalibrationError,
    DatasetError,
    InvalidIntrinsics,
    MpcalibError,
    SimulationError,
)
from .linear import linear_calibrate
from .metrics import compute_metrics, export_poses
from .refine import refine_calibration
from .simulate import PARAM_NAMES, SimConfig, generate
from .validation import as_camera_kind

__all__ = ["main"]


class _ConsistencyError(Exception):
    """Dataset and result files do not describe the same calibration."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpcalib",
        description="Multi-projection-center camera calibration tools.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "--verbose", action="store_true", help="enable debug logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a synthetic dataset")
    p_sim.add_argument("--config", required=True, help="simulation config JSON")
    p_sim.add_argument("--out", required=True, help="output dataset JSON")
    p_sim.add_argument(
        "--truth-out",
        default=None,
        help="ground-truth result JSON (default: <out stem>.truth.json)",
    )
    p_sim.add_argument(
        "--seed", type=int, default=None, help="override the config's seed"
    )

    p_cal = sub.add_parser("calibrate", help="calibrate from a dataset")
    p_cal.add_argument("--dataset", required=True, help="input dataset JSON")
    p_cal.add_argument("--out", required=True, help="output result JSON")
    p_cal.add_argument(
        "--camera-kind",
        default=None,
        help="override the dataset's camera kind",
    )
    p_cal.add_argument(
        "--skip-refine",
        action="store_true",
        help="stop after the closed-form stage",
    )
    p_cal.add_argument(
        "--max-iter", type=int, default=200, help="refinement iteration cap"
    )
    p_cal.add_argument(
        "--tol",
        type=float,
        default=1e-12,
        help="relative cost-decrease convergence threshold",
    )

    p_eval = sub.add_parser("evaluate", help="score a result against a dataset")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--result", required=True)
    p_eval.add_argument("--out", required=True, help="output metrics CSV")
    p_eval.add_argument(
        "--truth", default=None, help="ground-truth result JSON for error rows"
    )
    p_eval.add_argument(
        "--poses-out",
        default=None,
        help="also write board corners in the camera frame (text)",
    )

    p_rect = sub.add_parser("rectify", help="remove fitted distortion")
    p_rect.add_argument("--dataset", required=True)
    p_rect.add_argument("--result", required=True)
    p_rect.add_argument("--out", required=True, help="output dataset JSON")
    return parser


def _check_pair(
    dataset: CalibrationDataset,
    result: CalibrationResult,
    dataset_path: str,
) -> None:
    if tuple(dataset.pose_ids) != tuple(result.pose_ids):
        raise _ConsistencyError(
            f"pose ids differ: dataset has {dataset.pose_ids}, "
            f"result has {list(result.pose_ids)}"
        )
    if result.input_digest:
        digest = file_digest(dataset_path)
        if digest != result.input_digest:
            raise _ConsistencyError(
                "dataset content does not match the digest recorded in the "
                f"result ({digest} != {result.input_digest})"
            )


def _cmd_simulate(args: argparse.Namespace) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetError(
                f"{args.config}: invalid JSON at line {e.lineno}: {e.msg}"
            ) from e
    config = SimConfig.from_json_dict(raw)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    dataset, truth = generate(config)
    truth = dataclasses.replace(truth, tool_version=__version__)
    dataset.save(args.out)
    truth_path = args.truth_out or str(Path(args.out).with_suffix(".truth.json"))
    truth.save(truth_path)
    print(f"wrote dataset {args.out} ({dataset.n_poses} poses, "
          f"{dataset.n_observations} observations)")
    print(f"wrote truth {truth_path}")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    dataset = CalibrationDataset.load(args.dataset)
    kind = as_camera_kind(args.camera_kind, dataset.camera_kind)
    intrinsics, poses = linear_calibrate(dataset, kind)
    metrics_initial = compute_metrics(dataset, intrinsics, Distortion(), poses)

    distortion = Distortion()
    metrics_optimized = None
    refinement = None
    if not args.skip_refine:
        intrinsics, distortion, poses, refinement = refine_calibration(
            dataset, intrinsics, poses, max_iter=args.max_iter, tol_cost=args.tol
        )
        metrics_optimized = compute_metrics(dataset, intrinsics, distortion, poses)

    def stage(report):
        if report is None:
            return None
        return StageMetrics(
            rms_px=report.rms_px,
            mean_px=report.mean_px,
            rms_ray_mm=report.rms_ray_mm,
        )

    result = CalibrationResult(
        camera_kind=kind,
        intrinsics=intrinsics,
        distortion=distortion,
        pose_ids=tuple(dataset.pose_ids),
        poses=tuple(poses),
        metrics_initial=stage(metrics_initial),
        metrics_optimized=stage(metrics_optimized),
        refinement=refinement,
        tool_version=__version__,
        input_digest=file_digest(args.dataset),
    )
    result.save(args.out)
    for name in PARAM_NAMES:
        print(f"{name} {getattr(intrinsics, name):.10g}")
    print("distortion " + " ".join(f"{v:.10g}" for v in distortion.as_array()))
    print(f"initial rms_px {metrics_initial.rms_px:.6g}")
    if metrics_optimized is not None:
        print(f"optimized rms_px {metrics_optimized.rms_px:.6g} "
              f"after {refinement.n_iter} iterations ({refinement.termination})")
    print(f"wrote result {args.out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = CalibrationDataset.load(args.dataset)
    result = CalibrationResult.load(args.result)
    _check_pair(dataset, result, args.dataset)
    report = compute_metrics(
        dataset, result.intrinsics, result.distortion, list(result.poses)
    )

    rows: list[tuple[str, str, float]] = [
        ("rms_px", "all", report.rms_px),
        ("mean_px", "all", report.mean_px),
        ("rms_ray_mm", "all", report.rms_ray_mm),
    ]
    for pid in sorted(report.per_pose_rms_px):
        rows.append(("rms_px", f"pose:{pid}", report.per_pose_rms_px[pid]))
    for (i, j) in sorted(report.per_view_rms_px):
        rows.append(("rms_px", f"view:{i},{j}", report.per_view_rms_px[(i, j)]))

    if args.truth is not None:
        truth = CalibrationResult.load(args.truth)
        for name in PARAM_NAMES:
            true_val = getattr(truth.intrinsics, name)
            est_val = getattr(result.intrinsics, name)
            rows.append(
                (f"rel_err_{name}", "truth", abs(est_val - true_val) / abs(true_val))
            )
        pp_t = truth.intrinsics.principal_point_px
        pp_e = result.intrinsics.principal_point_px
        pp_err = ((pp_e[0] - pp_t[0]) ** 2 + (pp_e[1] - pp_t[1]) ** 2) ** 0.5
        rows.append(("pp_err_px", "truth", pp_err))

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "scope", "value"])
        writer.writerows(rows)

    if args.poses_out is not None:
        export_poses(
            dataset.board, list(result.pose_ids), list(result.poses), args.poses_out
        )
        print(f"wrote poses {args.poses_out}")
    print(f"rms_px {report.rms_px:.6g}  mean_px {report.mean_px:.6g}  "
          f"rms_ray_mm {report.rms_ray_mm:.6g}")
    print(f"wrote metrics {args.out}")
    return 0


def _cmd_rectify(args: argparse.Namespace) -> int:
    dataset = CalibrationDataset.load(args.dataset)
    result = CalibrationResult.load(args.result)
    if result.refinement is None:
        raise CalibrationError(
            "result has no refinement stage, so it carries no distortion "
            "estimate; run calibrate without --skip-refine first"
        )
    _check_pair(dataset, result, args.dataset)
    rectified = rectify_dataset(dataset, result.intrinsics, result.distortion)
    rectified.save(args.out)
    print(f"wrote rectified dataset {args.out}")
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "evaluate": _cmd_evaluate,
    "rectify": _cmd_rectify,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG)
    try:
        return _HANDLERS[args.command](args)
    except (DatasetError, SimulationError, InvalidIntrinsics) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except _ConsistencyError as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    except (CalibrationError, MpcalibError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
