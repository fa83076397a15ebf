import csv
import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from scopedepth.cli import main
from scopedepth.ensemble import load_ensemble
from scopedepth.imagery import read_pfm


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    rc = run("synth", "--out", out, "--seed", 7, "--frames", 5,
             "--width", 24, "--height", 24)
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    rc = run("train", "--data", dataset, "--out", out, "--regime", "supervised-gt",
             "--members", 2, "--seed", 3, "--steps", 40, "--grid", 6)
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def fused(trained, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "fused"
    assert run("fuse", "--run", trained, "--out", out) == 0
    return out


class TestSynth:
    def test_layout_and_manifest(self, dataset):
        names = {p.name for p in dataset.iterdir()}
        assert "manifest.json" in names and "intrinsics.json" in names
        assert "frame_0004.ppm" in names and "depth_0000.pfm" in names
        with open(dataset / "manifest.json") as f:
            m = json.load(f)
        assert m["command"] == "synth" and m["config"]["seed"] == 7

    def test_single_frame_usage_error(self, tmp_path):
        assert run("synth", "--out", tmp_path / "x", "--frames", 1) == 2

    def test_unwritable_output_path(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        assert run("synth", "--out", blocker / "ds", "--frames", 3) == 2

    def test_rerun_from_manifest_bit_identical(self, dataset, tmp_path):
        rc = run("synth", "--config", dataset / "manifest.json", "--out", tmp_path / "again")
        assert rc == 0
        for p in dataset.iterdir():
            if p.suffix in (".ppm", ".pfm") or p.name in ("intrinsics.json",):
                q = tmp_path / "again" / p.name
                assert q.read_bytes() == p.read_bytes(), p.name


class TestTrain:
    def test_member_artifacts(self, trained):
        assert (trained / "member_3.json").exists()
        assert (trained / "member_4.json").exists()
        with open(trained / "loss_3.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["step", "loss"] and len(rows) == 41

    def test_invalid_regime_exit_code(self, dataset, tmp_path):
        rc = run("train", "--data", dataset, "--out", tmp_path / "x",
                 "--regime", "nonsense")
        assert rc == 2

    def test_student_without_teacher_exit_code(self, dataset, tmp_path):
        rc = run("train", "--data", dataset, "--out", tmp_path / "x",
                 "--regime", "uncertain-student", "--steps", 5)
        assert rc == 2

    def test_missing_dataset_exit_code(self, tmp_path):
        rc = run("train", "--data", tmp_path / "absent", "--out", tmp_path / "x")
        assert rc == 2


class TestFuseEvalCalib:
    def test_fuse_outputs(self, fused):
        out = load_ensemble(fused)
        assert out.members == 2 and out.seeds == (3, 4)
        assert np.array_equal(out.var_t.data, out.var_a.data + out.var_e.data)

    def test_eval_csv_row(self, fused, dataset, tmp_path):
        out = tmp_path / "metrics.csv"
        assert run("eval", "--pred", fused, "--data", dataset, "--out", out) == 0
        with open(out) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1",
                           "delta2", "delta3", "auce_signed", "auce_abs"]
        vals = [float(v) for v in rows[1]]
        assert len(vals) == 9 and all(np.isfinite(vals))

    def test_eval_perfect_prediction_zeros(self, dataset, tmp_path):
        # hand-assemble a "prediction" equal to the ground truth
        from scopedepth.ensemble import EnsembleOutput, save_ensemble
        from scopedepth.imagery import UncMap

        gt = read_pfm(dataset / "depth_0002.pfm")
        zero = np.zeros((gt.height, gt.width), dtype=np.float32)
        out = EnsembleOutput(gt, *(UncMap(zero, "variance"),) * 3, 1, (0,))
        save_ensemble(out, tmp_path / "perfect")
        csv_path = tmp_path / "m.csv"
        assert run("eval", "--pred", tmp_path / "perfect", "--data", dataset,
                   "--out", csv_path) == 0
        with open(csv_path) as f:
            rows = list(csv.reader(f))
        vals = dict(zip(rows[0], map(float, rows[1])))
        assert vals["abs_rel"] == 0 and vals["rmse"] == 0
        assert vals["delta1"] == 1 and vals["delta3"] == 1

    def test_median_scale_restores_rescaled_prediction(self, dataset, tmp_path):
        from scopedepth.ensemble import EnsembleOutput, save_ensemble
        from scopedepth.imagery import DepthMap, UncMap

        gt = read_pfm(dataset / "depth_0002.pfm")
        zero = np.zeros((gt.height, gt.width), dtype=np.float32)
        scaled = EnsembleOutput(DepthMap(gt.data * 0.25),
                                *(UncMap(zero, "variance"),) * 3, 1, (0,))
        save_ensemble(scaled, tmp_path / "scaled")
        csv_path = tmp_path / "s.csv"
        assert run("eval", "--pred", tmp_path / "scaled", "--data", dataset,
                   "--out", csv_path, "--median-scale") == 0
        with open(csv_path) as f:
            rows = list(csv.reader(f))
        vals = dict(zip(rows[0], map(float, rows[1])))
        assert vals["abs_rel"] < 1e-6 and vals["delta1"] == 1.0

    def test_calib_curve_csv(self, fused, dataset, tmp_path):
        out = tmp_path / "curve.csv"
        assert run("calib", "--pred", fused, "--data", dataset, "--out", out,
                   "--levels", 19) == 0
        with open(out) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["p", "coverage"] and len(rows) == 20
        ps = [float(r[0]) for r in rows[1:]]
        cov = [float(r[1]) for r in rows[1:]]
        assert ps == [round(0.05 * i, 10) for i in range(1, 20)]
        assert all(0 <= c <= 1 for c in cov)
        assert cov == sorted(cov)

    def test_dimension_mismatch_exit_code(self, fused, tmp_path):
        other = tmp_path / "other_ds"
        assert run("synth", "--out", other, "--seed", 1, "--frames", 3,
                   "--width", 16, "--height", 16) == 0
        rc = run("eval", "--pred", fused, "--data", other, "--out", tmp_path / "x.csv")
        assert rc == 2


class TestDeterminismAcrossJobs:
    def test_train_jobs_bit_identical(self, dataset, tmp_path):
        a = tmp_path / "j1"
        b = tmp_path / "j2"
        for out, jobs in ((a, 1), (b, 2)):
            assert run("train", "--data", dataset, "--out", out,
                       "--regime", "supervised-gt", "--members", 2,
                       "--seed", 5, "--steps", 25, "--grid", 6,
                       "--jobs", jobs) == 0
        for name in ("member_5.json", "member_6.json", "loss_5.csv", "loss_6.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
