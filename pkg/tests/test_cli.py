import json
from pathlib import Path

import pytest

from qprocess.cli import main

MODELS = Path(__file__).resolve().parent.parent / "models"


def run(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestModelInfo:
    def test_critical(self, capsys):
        code, out, _ = run(
            ["model-info", "--model", str(MODELS / "critical.txt")], capsys
        )
        assert code == 0
        assert "criticality: critical" in out
        assert "beta = 1" in out
        assert "p11 limit (t^2-scaled) = 4" in out

    def test_supercritical(self, capsys):
        code, out, _ = run(
            ["model-info", "--model", str(MODELS / "supercritical.txt")], capsys
        )
        assert code == 0
        assert "q = 0.5" in out
        assert "beta = 0.606530659713" in out
        assert "gamma = 2" in out
        assert "Kolmogorov constant = 0.25" in out

    def test_malformed_model_exits_with_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("a_0 = 0.0\na_1 = -1.0\na_2 = 1.0\n")
        code, _, err = run(["model-info", "--model", str(bad)], capsys)
        assert code == 1
        assert "a_0" in err

    def test_unparseable_model_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("a_0 = 0.5\nnope\n")
        code, _, err = run(["model-info", "--model", str(bad)], capsys)
        assert code == 1
        assert "line 2" in err


class TestVerifyTheorems:
    def test_subcritical_pass(self, tmp_path, capsys):
        out_dir = tmp_path / "vt"
        code, out, _ = run(
            [
                "verify-theorems",
                "--model", str(MODELS / "subcritical.txt"),
                "--t-grid", "5,10,20",
                "--out", str(out_dir),
            ],
            capsys,
        )
        assert code == 0
        assert "PASS" in out
        for name in [
            "p11_convergence.csv",
            "p11_convergence.png",
            "variance_normalization.csv",
            "variance_normalization.png",
            "conditioned_table_t5.csv",
            "conditioned_table_t20.csv",
            "manifest.json",
        ]:
            assert (out_dir / name).exists(), name
        header = (out_dir / "variance_normalization.csv").read_text().splitlines()[0]
        assert header == "t,normalized_variance,stderr,method"
        table_lines = (out_dir / "conditioned_table_t5.csv").read_text().splitlines()
        assert table_lines[0].startswith("# t=5")
        assert table_lines[1] == "j,prob"

    def test_gate_failure_exit_code(self, tmp_path, capsys):
        # an unreachable tolerance forces the gate to fail
        code, out, _ = run(
            [
                "verify-theorems",
                "--model", str(MODELS / "subcritical.txt"),
                "--t-grid", "5,10",
                "--out", str(tmp_path / "vt2"),
                "--p11-gate", "1e-12",
            ],
            capsys,
        )
        assert code == 3
        assert "FAIL" in out

    def test_empty_grid_is_usage_error(self, tmp_path, capsys):
        code, _, err = run(
            [
                "verify-theorems",
                "--model", str(MODELS / "critical.txt"),
                "--t-grid", ",",
                "--out", str(tmp_path / "vt3"),
            ],
            capsys,
        )
        assert code == 1

    def test_monte_carlo_method_needs_seed(self, tmp_path, capsys):
        code, _, err = run(
            [
                "verify-theorems",
                "--model", str(MODELS / "critical.txt"),
                "--t-grid", "5,10",
                "--method", "monte_carlo",
                "--reps", "2000",
                "--out", str(tmp_path / "vt4"),
            ],
            capsys,
        )
        assert code == 1
        assert "seed" in err


class TestEstimate:
    def test_reports_are_byte_identical_across_runs(self, tmp_path, capsys):
        args = [
            "estimate",
            "--model", str(MODELS / "critical.txt"),
            "--t", "3",
            "--reps", "2000",
            "--seed", "42",
        ]
        code1, _, _ = run(args + ["--out", str(tmp_path / "a")], capsys)
        code2, _, _ = run(args + ["--out", str(tmp_path / "b")], capsys)
        assert code1 == code2 == 0
        ja = (tmp_path / "a" / "estimator_report.json").read_bytes()
        jb = (tmp_path / "b" / "estimator_report.json").read_bytes()
        assert ja == jb
        report = json.loads(ja)
        assert report["n_total"] == 2000
        assert report["exact_series_variance"] is not None
        assert (tmp_path / "a" / "estimates.png").stat().st_size > 0
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["parameters"]["seed"] == 42
        assert "estimator_report.json" in manifest["outputs"]

    def test_seed_is_mandatory(self, tmp_path, capsys):
        code, _, err = run(
            [
                "estimate",
                "--model", str(MODELS / "critical.txt"),
                "--t", "3",
                "--reps", "2000",
                "--out", str(tmp_path / "x"),
            ],
            capsys,
        )
        assert code == 1
        assert "seed" in err

    def test_small_replicate_count_rejected(self, tmp_path, capsys):
        code, _, err = run(
            [
                "estimate",
                "--model", str(MODELS / "critical.txt"),
                "--t", "3",
                "--reps", "500",
                "--seed", "1",
                "--out", str(tmp_path / "x"),
            ],
            capsys,
        )
        assert code == 1

    def test_config_file_supplies_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "model = %s\nt = 3\nreps = 2000\nseed = 9\nout = %s\n"
            % (MODELS / "critical.txt", tmp_path / "from_cfg")
        )
        code, _, _ = run(["estimate", "--config", str(cfg)], capsys)
        assert code == 0
        assert (tmp_path / "from_cfg" / "estimator_report.json").exists()

    def test_flags_override_config(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "model = %s\nt = 3\nreps = 2000\nseed = 9\nout = %s\n"
            % (MODELS / "critical.txt", tmp_path / "cfg_out")
        )
        code, _, _ = run(
            ["estimate", "--config", str(cfg), "--out", str(tmp_path / "flag_out")],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "flag_out" / "estimator_report.json").exists()
        assert not (tmp_path / "cfg_out").exists()


class TestSimulate:
    def test_writes_trajectories_and_figure(self, tmp_path, capsys):
        out_dir = tmp_path / "sim"
        code, out, _ = run(
            [
                "simulate",
                "--model", str(MODELS / "supercritical.txt"),
                "--process", "qprocess",
                "--horizon", "5",
                "--reps", "4",
                "--seed", "3",
                "--out", str(out_dir),
            ],
            capsys,
        )
        assert code == 0
        for rep in range(4):
            f = out_dir / ("trajectory_%05d.csv" % rep)
            assert f.exists()
            assert f.read_text().splitlines()[0] == "time,state"
        assert (out_dir / "trajectories.png").stat().st_size > 0

    def test_deterministic_output(self, tmp_path, capsys):
        args = [
            "simulate",
            "--model", str(MODELS / "critical.txt"),
            "--process", "mbs",
            "--horizon", "4",
            "--reps", "2",
            "--seed", "8",
        ]
        run(args + ["--out", str(tmp_path / "s1")], capsys)
        run(args + ["--out", str(tmp_path / "s2")], capsys)
        a = (tmp_path / "s1" / "trajectory_00001.csv").read_bytes()
        b = (tmp_path / "s2" / "trajectory_00001.csv").read_bytes()
        assert a == b


class TestParser:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_unknown_command_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1
