import json

import numpy as np
import pytest

from nsholder import pipeline
from nsholder.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_NO_RADIUS, EXIT_OK, EXIT_UNRESOLVED, EXIT_VIOLATION, main
from nsholder.io import read_numeric_table, read_table
from nsholder.campanato import CAMPANATO_SCHEMA

CONFIG = """
[experiment]
name = cli
[solver]
n = 128
dt = 4e-3
t_end = 1.0
output_every = 5
dense_from = 0.5
[forcing]
kind = IndicatorStress
[diagnostics]
margin = 0.25
tau = 0.5
r_max = 0.5
ladder_ratio = 0.7071067811865476
[output]
directory = run
"""


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "exp.ini").write_text(CONFIG)
    assert main(["simulate", str(root / "exp.ini")]) == EXIT_OK
    traj = root / "run" / "trajectory"
    assert main(["diagnose", str(traj)]) == EXIT_OK
    assert main(["iterate", str(traj / "diagnostics")]) == EXIT_OK
    return traj


class TestSimulate:
    def test_outputs(self, pipeline_dir):
        for name in ("manifest.json", "energy_log.csv", "energy.png", "experiment.json", "snap_000000.ns2d"):
            assert (pipeline_dir / name).exists()
        exp = json.loads((pipeline_dir / "experiment.json").read_text())
        assert exp["diagnostics"]["tau"] == 0.5 and exp["name"] == "cli"

    def test_bad_config(self, tmp_path, capsys):
        (tmp_path / "bad.ini").write_text("[solver]\nn = 32\ncolour = red\n")
        assert main(["simulate", str(tmp_path / "bad.ini")]) == EXIT_CONFIG
        assert "bad.ini:3:" in capsys.readouterr().err

    def test_abort(self, tmp_path, capsys):
        (tmp_path / "hot.ini").write_text(
            "[solver]\nn = 16\ndt = 0.1\nt_end = 0.2\nmax_halvings = 0\n"
            "[initial]\nkind = TaylorGreen\namplitude = 50\n")
        assert main(["simulate", str(tmp_path / "hot.ini"), "--out", str(tmp_path / "t")]) == EXIT_ABORT
        manifest = json.loads((tmp_path / "t" / "manifest.json").read_text())
        assert manifest["complete"] is False and manifest["last_valid"] == 0
        assert "aborted" in capsys.readouterr().err


class TestDiagnose:
    def test_outputs(self, pipeline_dir):
        out = pipeline_dir / "diagnostics"
        header, rows = read_table(out / "campanato.csv", CAMPANATO_SCHEMA)
        assert header[:4] == ["x0_1", "x0_2", "t0", "radius"] and rows
        summary = json.loads((out / "summary.json").read_text())
        assert summary["R0"] is not None and summary["tau"] == 0.5
        assert summary["M2gamma"] > 0 and summary["report"]["cylinders"] == 16
        assert (out / "campanato.png").exists() and (out / "basic_estimate.csv").exists()

    def test_overrides(self, pipeline_dir, tmp_path):
        out = tmp_path / "d"
        assert main(["diagnose", str(pipeline_dir), "--out", str(out), "--center-stride", "0.5",
                     "--ladder", "4", "--tops", "1.0"]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["centers"]) == 4 and len(summary["radii"]) <= 4

    def test_unresolved(self, pipeline_dir, tmp_path, capsys):
        assert main(["diagnose", str(pipeline_dir), "--out", str(tmp_path / "d"), "--margin", "2.0"]) \
            == EXIT_UNRESOLVED
        assert main(["diagnose", str(pipeline_dir), "--out", str(tmp_path / "e"), "--r-max", "0.05"]) \
            == EXIT_UNRESOLVED

    def test_bad_arguments(self, pipeline_dir, tmp_path):
        assert main(["diagnose", str(tmp_path)]) == EXIT_CONFIG
        assert main(["diagnose", str(pipeline_dir), "--gamma", "1.5", "--out", str(tmp_path / "x")]) == EXIT_CONFIG


class TestIterate:
    def test_outputs(self, pipeline_dir):
        out = pipeline_dir / "diagnostics"
        res = json.loads((out / "iteration_summary.json").read_text())
        assert res["all_below_improved_envelope"] and res["H2_max"] > 0
        header, arr = read_numeric_table(out / "envelope_table.csv", pipeline.ENVELOPE_SCHEMA)
        assert header[3:7] == ["radius", "phi", "envelope_first", "envelope_improved"]
        assert np.all(arr[:, 4] <= arr[:, 6])
        assert "plot" in (out / "envelope.gp").read_text() and (out / "envelope.png").exists()

    def test_c_override(self, pipeline_dir, tmp_path):
        assert main(["iterate", str(pipeline_dir / "diagnostics" / "summary.json"), "--c", "0.3",
                     "--out", str(tmp_path)]) == EXIT_OK
        res = json.loads((tmp_path / "iteration_summary.json").read_text())
        assert res["c"] == 0.3 and res["c_source"] == "argument"

    def test_missing_radius(self, pipeline_dir, tmp_path, capsys):
        summary = json.loads((pipeline_dir / "diagnostics" / "summary.json").read_text())
        summary["R0"] = None
        (tmp_path / "summary.json").write_text(json.dumps(summary))
        assert main(["iterate", str(tmp_path)]) == EXIT_NO_RADIUS
        assert "starting radius" in capsys.readouterr().err

    def test_wrong_schema(self, tmp_path):
        (tmp_path / "summary.json").write_text(json.dumps({"schema": "other"}))
        assert main(["iterate", str(tmp_path)]) == EXIT_CONFIG

    def test_zero_report_gives_zero_envelopes(self, tmp_path):
        summary = {"schema": pipeline.SUMMARY_SCHEMA, "gamma": 0.5, "tau": 0.5, "R0": 0.5, "M": 0.0,
                   "c_absorbed": None, "c_basic": None,
                   "centers": [{"x0": [1.0, 1.0], "t0": 2.0, "radius": [0.5, 0.25], "phi": [0.0, 0.0],
                                "theta0": 0.0, "theta_r0": 0.0, "mean_norm": 0.0}]}
        res = pipeline.iterate_report(summary, tmp_path)
        _, arr = read_numeric_table(tmp_path / "envelope_table.csv", pipeline.ENVELOPE_SCHEMA)
        assert not np.any(arr[:, 5:7]) and res["all_below_improved_envelope"]


class TestVerify:
    def test_selected_suite(self, tmp_path, capsys):
        assert main(["verify", "--suite", "caloric", "--out", str(tmp_path)]) == EXIT_OK
        assert "caloric" in capsys.readouterr().out
        header, rows = read_table(tmp_path / "verify_caloric.csv", pipeline.VERIFY_SCHEMA)
        assert len(rows) == 6 and header[-1] == "passed"

    def test_empty_selection(self, tmp_path, capsys):
        assert main(["verify", "--suite", "--out", str(tmp_path)]) == EXIT_OK
        assert "empty suite selection" in capsys.readouterr().err

    def test_unknown_suite(self, tmp_path):
        assert main(["verify", "--suite", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_violation(self, tmp_path, capsys):
        code = main(["verify", "--suite", "ladyzhenskaya", "--constant-scale", "0.2", "--out", str(tmp_path)])
        assert code == EXIT_VIOLATION
        assert "VIOLATION" in capsys.readouterr().out

    def test_help(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
