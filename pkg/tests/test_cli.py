"""End-to-end command-line runs, in process via main(argv)."""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from mpcalib import (
    CalibrationDataset,
    CalibrationResult,
    Distortion,
    __version__,
    file_digest,
    generate,
)
from mpcalib.cli import main
from conftest import ASPECT, make_config

KNOWN_DIST = Distortion(k1=0.08, k2=0.02, k3=0.003, k4=0.001)


def write_config(path: Path, **kwargs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(make_config(**kwargs).to_json_dict(), fh)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    """Noiseless aspect-consistent run: config, dataset, truth, results."""
    d = tmp_path_factory.mktemp("cli")
    write_config(d / "cfg.json")
    assert main(["simulate", "--config", str(d / "cfg.json"),
                 "--out", str(d / "ds.json")]) == 0
    assert main(["calibrate", "--dataset", str(d / "ds.json"),
                 "--out", str(d / "result.json")]) == 0
    assert main(["calibrate", "--dataset", str(d / "ds.json"),
                 "--out", str(d / "skip.json"), "--skip-refine"]) == 0
    return d


class TestSimulate:
    def test_writes_dataset_and_default_truth(self, workdir):
        ds = CalibrationDataset.load(workdir / "ds.json")
        assert ds.n_poses == 3
        assert ds.view_grid.n_views == 49
        assert ds.n_observations == 3 * 49 * 144
        truth = CalibrationResult.load(workdir / "ds.truth.json")
        assert truth.intrinsics == ASPECT
        assert truth.tool_version == __version__

    def test_truth_out_flag(self, workdir, tmp_path):
        out = tmp_path / "other.json"
        sidecar = tmp_path / "gt.json"
        assert main(["simulate", "--config", str(workdir / "cfg.json"),
                     "--out", str(out), "--truth-out", str(sidecar)]) == 0
        assert sidecar.exists()
        assert not (tmp_path / "other.truth.json").exists()

    def test_seed_determinism(self, workdir, tmp_path):
        again = tmp_path / "again.json"
        assert main(["simulate", "--config", str(workdir / "cfg.json"),
                     "--out", str(again)]) == 0
        assert again.read_bytes() == (workdir / "ds.json").read_bytes()

    def test_seed_override_changes_output(self, workdir, tmp_path):
        # fixed poses stay pinned, so add noise for the seed to matter
        cfg = tmp_path / "noisy.json"
        write_config(cfg, noise_sigma_px=0.5, seed=1)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(b),
                     "--seed", "99"]) == 0
        assert a.read_bytes() != b.read_bytes()


class TestCalibrate:
    def test_noiseless_matches_truth(self, workdir):
        result = CalibrationResult.load(workdir / "result.json")
        truth = CalibrationResult.load(workdir / "ds.truth.json")
        for name in ("ki", "kj", "ku", "kv", "u0", "v0"):
            t = getattr(truth.intrinsics, name)
            e = getattr(result.intrinsics, name)
            assert abs(e - t) / abs(t) < 1e-6, name
        for est, true in zip(result.poses, truth.poses):
            assert np.abs(est.translation - true.translation).max() < 1e-8
            assert np.abs(est.rotation - true.rotation).max() < 1e-6
        assert result.metrics_optimized.rms_px < 1e-8
        assert result.input_digest == file_digest(workdir / "ds.json")

    def test_skip_refine(self, workdir):
        result = CalibrationResult.load(workdir / "skip.json")
        assert result.distortion.is_zero
        assert result.metrics_optimized is None
        assert result.refinement is None

    def test_determinism(self, workdir, tmp_path):
        out = tmp_path / "again.json"
        assert main(["calibrate", "--dataset", str(workdir / "ds.json"),
                     "--out", str(out)]) == 0
        assert out.read_bytes() == (workdir / "result.json").read_bytes()

    def test_single_pose_exits_4(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        write_config(cfg, n_poses=1, fixed=False)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "ds.json")]) == 0
        code = main(["calibrate", "--dataset", str(tmp_path / "ds.json"),
                     "--out", str(tmp_path / "r.json")])
        assert code == 4
        assert "insufficient poses" in capsys.readouterr().err

    def test_bad_camera_kind_exits_2(self, workdir, tmp_path, capsys):
        code = main(["calibrate", "--dataset", str(workdir / "ds.json"),
                     "--out", str(tmp_path / "r.json"),
                     "--camera-kind", "fisheye"])
        assert code == 2
        assert "unknown camera_kind" in capsys.readouterr().err


class TestEvaluate:
    def test_truth_result_scores_zero(self, workdir, tmp_path):
        out = tmp_path / "metrics.csv"
        assert main(["evaluate", "--dataset", str(workdir / "ds.json"),
                     "--result", str(workdir / "ds.truth.json"),
                     "--truth", str(workdir / "ds.truth.json"),
                     "--out", str(out)]) == 0
        with open(out, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["metric", "scope", "value"]
        body = rows[1:]
        # 3 aggregate + 3 per pose + 49 per view + 6 rel errors + 1 pp
        assert len(body) == 3 + 3 + 49 + 6 + 1
        for metric, scope, value in body:
            assert float(value) <= 1e-10, (metric, scope)
        names = [r[0] for r in body]
        assert sum(n.startswith("rel_err_") for n in names) == 6
        assert names.count("pp_err_px") == 1
        assert sum(s.startswith("view:") for _, s, _ in body) == 49

    def test_poses_out(self, workdir, tmp_path):
        out = tmp_path / "m.csv"
        poses = tmp_path / "poses.txt"
        assert main(["evaluate", "--dataset", str(workdir / "ds.json"),
                     "--result", str(workdir / "result.json"),
                     "--out", str(out), "--poses-out", str(poses)]) == 0
        assert poses.stat().st_size > 0

    def test_pose_id_mismatch_exits_5(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        write_config(cfg, n_poses=4, fixed=False, seed=5)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "four.json")]) == 0
        code = main(["evaluate", "--dataset", str(tmp_path / "four.json"),
                     "--result", str(workdir / "ds.truth.json"),
                     "--out", str(tmp_path / "m.csv")])
        assert code == 5
        assert "pose ids differ" in capsys.readouterr().err

    def test_digest_mismatch_exits_5(self, workdir, tmp_path, capsys):
        # same pose count, different content: the recorded digest catches it
        tampered = tmp_path / "ds.json"
        cfg = make_config(noise_sigma_px=0.5, seed=77)
        ds, _ = generate(cfg)
        ds.save(tampered)
        code = main(["evaluate", "--dataset", str(tampered),
                     "--result", str(workdir / "result.json"),
                     "--out", str(tmp_path / "m.csv")])
        assert code == 5
        assert "digest" in capsys.readouterr().err


class TestRectify:
    def test_zero_distortion_is_identity(self, workdir, tmp_path):
        out = tmp_path / "rect.json"
        assert main(["rectify", "--dataset", str(workdir / "ds.json"),
                     "--result", str(workdir / "result.json"),
                     "--out", str(out)]) == 0
        rect = CalibrationDataset.load(out)
        orig = CalibrationDataset.load(workdir / "ds.json")
        assert rect.rectified
        for a, b in zip(rect.poses, orig.poses):
            assert np.abs(a.u - b.u).max() <= 1e-10
            assert np.abs(a.v - b.v).max() <= 1e-10

    def test_removes_known_distortion(self, tmp_path):
        cfg = make_config(distortion=KNOWN_DIST)
        ds, _ = generate(cfg)
        ds.save(tmp_path / "ds.json")
        clean, _ = generate(dataclasses.replace(cfg, distortion=Distortion()))
        assert main(["calibrate", "--dataset", str(tmp_path / "ds.json"),
                     "--out", str(tmp_path / "r.json")]) == 0
        assert main(["rectify", "--dataset", str(tmp_path / "ds.json"),
                     "--result", str(tmp_path / "r.json"),
                     "--out", str(tmp_path / "rect.json")]) == 0
        rect = CalibrationDataset.load(tmp_path / "rect.json")
        for a, b in zip(rect.poses, clean.poses):
            assert np.abs(a.u - b.u).max() < 1e-8
            assert np.abs(a.v - b.v).max() < 1e-8

    def test_skip_refine_result_exits_4(self, workdir, tmp_path, capsys):
        code = main(["rectify", "--dataset", str(workdir / "ds.json"),
                     "--result", str(workdir / "skip.json"),
                     "--out", str(tmp_path / "rect.json")])
        assert code == 4
        assert "no refinement stage" in capsys.readouterr().err


class TestErrorPaths:
    def test_missing_field_exits_2(self, tmp_path, capsys):
        raw = make_config().to_json_dict()
        del raw["board"]["cell_mm"]
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(raw), encoding="utf-8")
        code = main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "ds.json")])
        assert code == 2
        assert "board.cell_mm" in capsys.readouterr().err

    def test_invalid_json_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{ not json", encoding="utf-8")
        code = main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "ds.json")])
        assert code == 2
        assert "line 1" in capsys.readouterr().err

    def test_missing_file_exits_3(self, tmp_path):
        code = main(["calibrate", "--dataset", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "r.json")])
        assert code == 3

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out
