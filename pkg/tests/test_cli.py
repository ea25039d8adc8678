import numpy as np
import pytest

from coverduals import cli
from coverduals.cli import ExperimentSpec, feasibility_report, main, run

TINY_SPEC = """\
# desk-scale fair run
mode = fair
controller = clairvoyant
repetitions = 2
seed = 11
env_size = 64
num_robots = 4
num_idfs = 2
comm_radius = 32
sensor_size = 16
num_steps = 20
dual_period = 10
"""


def write_spec(tmp_path, text=TINY_SPEC, name="exp.spec"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestSpecParsing:
    def test_parse_round_trip_values(self, tmp_path):
        spec = ExperimentSpec.from_file(write_spec(tmp_path))
        assert spec.mode == "fair"
        assert spec.controller == "clairvoyant"
        assert spec.repetitions == 2
        assert spec.seed == 11
        assert spec.world.env_size == 64
        assert spec.world.num_steps == 20

    def test_sweep_axes_and_cells(self, tmp_path):
        text = TINY_SPEC + "robot_counts = 2,4\nidf_counts = 1,2,3\n"
        spec = ExperimentSpec.from_file(write_spec(tmp_path, text))
        cells = spec.cells()
        assert len(cells) == 6
        assert {c["num_robots"] for c in cells} == {2, 4}
        assert {c["num_idfs"] for c in cells} == {1, 2, 3}

    def test_unknown_key_rejected(self, tmp_path):
        path = write_spec(tmp_path, TINY_SPEC + "bogus = 1\n")
        with pytest.raises(ValueError, match="unknown key 'bogus'"):
            ExperimentSpec.from_file(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = write_spec(tmp_path, "mode fair\n")
        with pytest.raises(ValueError, match="key=value"):
            ExperimentSpec.from_file(path)

    def test_unknown_mode_rejected(self, tmp_path):
        path = write_spec(tmp_path, TINY_SPEC.replace("fair", "greedy"))
        with pytest.raises(ValueError, match="unknown mode"):
            ExperimentSpec.from_file(path)

    def test_constrained_requires_mu_levels(self, tmp_path):
        path = write_spec(tmp_path, TINY_SPEC.replace("mode = fair",
                                                      "mode = constrained"))
        with pytest.raises(ValueError, match="mu_levels"):
            ExperimentSpec.from_file(path)

    def test_lpac_requires_weights(self, tmp_path):
        path = write_spec(tmp_path, TINY_SPEC.replace(
            "controller = clairvoyant", "controller = lpac"))
        with pytest.raises(ValueError, match="weights"):
            ExperimentSpec.from_file(path)


class TestExitCodes:
    def test_success(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        code = main(["--spec", str(spec), "--out", str(tmp_path / "out")])
        assert code == 0
        assert "wrote" in capsys.readouterr().out

    def test_bad_spec_returns_2(self, tmp_path, capsys):
        spec = write_spec(tmp_path, "nonsense = 1\n")
        assert main(["--spec", str(spec), "--out", str(tmp_path)]) == 2
        assert "bad spec" in capsys.readouterr().err

    def test_missing_spec_returns_2(self, tmp_path, capsys):
        code = main(["--spec", str(tmp_path / "absent"), "--out",
                     str(tmp_path)])
        assert code == 2

    def test_unwritable_out_returns_3(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        code = main(["--spec", str(spec), "--out", str(blocker)])
        assert code == 3
        assert "I/O failure" in capsys.readouterr().err

    def test_cli_overrides_apply(self, tmp_path):
        spec = write_spec(tmp_path)
        out = tmp_path / "out"
        code = main(["--spec", str(spec), "--out", str(out),
                     "--controller", "centralized", "--seed", "99"])
        assert code == 0
        body = (out / "run_c000_r000.csv").read_text()
        assert "centralized,99" in body


class TestRunOutputs:
    def test_files_written_and_csv_shape(self, tmp_path):
        spec = ExperimentSpec.from_file(write_spec(tmp_path))
        out = tmp_path / "out"
        files = run(spec, out)
        names = sorted(p.name for p in files)
        assert names == ["run_c000_r000.csv", "run_c000_r001.csv",
                         "summary.csv"]
        lines = (out / "run_c000_r000.csv").read_text().splitlines()
        assert lines[0].split(",") == [
            "step", "time_s", "J_0", "J_1", "max_J",
            "lambda_0", "lambda_1", "controller", "seed"]
        assert len(lines) == 1 + 20

    def test_max_column_is_row_maximum(self, tmp_path):
        spec = ExperimentSpec.from_file(write_spec(tmp_path))
        out = tmp_path / "out"
        run(spec, out)
        for line in (out / "run_c000_r000.csv").read_text().splitlines()[1:]:
            parts = line.split(",")
            j0, j1, mx = float(parts[2]), float(parts[3]), float(parts[4])
            assert mx == max(j0, j1)

    def test_lambda_columns_follow_dual_schedule(self, tmp_path):
        spec = ExperimentSpec.from_file(write_spec(tmp_path))
        out = tmp_path / "out"
        run(spec, out)
        lines = (out / "run_c000_r000.csv").read_text().splitlines()[1:]
        lams = np.array([[float(v) for v in ln.split(",")[5:7]]
                         for ln in lines])
        # weights are constant within each period and start uniform
        assert np.allclose(lams[:10], 0.5)
        assert (lams[10:] == lams[10]).all()
        assert lams[10].sum() == pytest.approx(1.0, abs=1e-9)

    def test_reruns_are_byte_identical(self, tmp_path):
        spec = ExperimentSpec.from_file(write_spec(tmp_path))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run(spec, out_a)
        run(spec, out_b)
        for name in ("run_c000_r000.csv", "run_c000_r001.csv",
                     "summary.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_repetitions_use_distinct_seeds(self, tmp_path):
        spec = ExperimentSpec.from_file(write_spec(tmp_path))
        out = tmp_path / "out"
        run(spec, out)
        a = (out / "run_c000_r000.csv").read_text()
        b = (out / "run_c000_r001.csv").read_text()
        assert ",11" in a and ",12" in b
        assert a != b

    def test_constrained_summary_reports_feasibility(self, tmp_path):
        text = TINY_SPEC.replace("mode = fair", "mode = constrained")
        text += "mu_levels = 0.5\n"
        spec = ExperimentSpec.from_file(write_spec(tmp_path, text))
        out = tmp_path / "out"
        run(spec, out)
        lines = (out / "summary.csv").read_text().splitlines()
        header = lines[0].split(",")
        row = lines[1].split(",")
        pct_c = float(row[header.index("pct_infeasible_constraints")])
        pct_p = float(row[header.index("pct_infeasible_problems")])
        assert 0.0 <= pct_c <= 100.0
        assert pct_c <= pct_p <= 100.0


class TestFeasibilityReport:
    def test_hand_counts(self):
        means = np.array([[0.5, 0.2], [0.1, 0.9], [0.1, 0.1]])
        alphas = np.array([[0.4, 0.4], [0.4, 0.4], [0.4, 0.4]])
        pct_c, pct_p = feasibility_report(means, alphas)
        assert pct_c == pytest.approx(100 * 2 / 6)
        assert pct_p == pytest.approx(100 * 2 / 3)

    def test_all_feasible(self):
        pct_c, pct_p = feasibility_report(np.full((5, 3), 0.1),
                                          np.full((5, 3), 0.5))
        assert (pct_c, pct_p) == (0.0, 0.0)

    def test_random_instances_match_recount(self):
        rng = np.random.default_rng(17)
        means = rng.random((20, 4))
        alphas = rng.random((20, 4))
        pct_c, pct_p = feasibility_report(means, alphas)
        bad = means > alphas
        assert pct_c == pytest.approx(100.0 * bad.sum() / bad.size)
        assert pct_p == pytest.approx(100.0 * bad.any(axis=1).sum() / 20)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="align"):
            feasibility_report(np.zeros((2, 3)), np.zeros((2, 2)))


class TestLpacEndToEnd:
    def test_lpac_controller_runs_from_bundle_file(self, tmp_path):
        from coverduals.lpac import WeightBundle
        bundle_path = tmp_path / "policy.weights"
        WeightBundle.random(np.random.default_rng(3), scale=0.3).save(
            bundle_path)
        text = TINY_SPEC.replace("controller = clairvoyant",
                                 "controller = lpac")
        text += f"weights = {bundle_path}\nrepetitions = 1\n"
        # repetitions appears twice; last assignment wins by design
        spec = ExperimentSpec.from_file(write_spec(tmp_path, text))
        assert spec.repetitions == 1
        out = tmp_path / "out"
        files = run(spec, out)
        assert (out / "run_c000_r000.csv").exists()
        assert len(files) == 2
