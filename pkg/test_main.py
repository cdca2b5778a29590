import json

import pandas as pd
import pytest

from main import EXIT_COMPUTE, EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, _jsonable, main

DEPHASING_EP = ["--gamma0", "1", "--c", "0", "--j", "0.5"]


def run_json(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    assert code == EXIT_OK, captured.err
    return json.loads(captured.out)


class TestJsonable:
    def test_non_finite_becomes_null(self):
        assert _jsonable({"a": float("inf"), "b": [float("nan"), 1.5]}) == {"a": None, "b": [None, 1.5]}

    def test_complex_becomes_pair(self):
        assert _jsonable(1 + 2j) == [1.0, 2.0]


class TestSpectrum:
    def test_report(self, capsys):
        payload = run_json(capsys, ["spectrum", *DEPHASING_EP])
        assert payload["n_eigvals"] == 16
        assert payload["defective_any"] is True
        assert payload["trace_residual"] < 1e-12
        assert payload["config"]["model"]["gamma0"] == 1.0
        assert "timestamp" in payload and "version" in payload

    def test_missing_gamma0(self, capsys):
        assert main(["spectrum", "--c", "0.2"]) == EXIT_CONFIG
        assert "model.gamma0" in capsys.readouterr().err

    def test_outside_positivity_range(self, capsys):
        assert main(["spectrum", "--kind", "cycle", "--n", "4", "--gamma0", "1", "--c", "0.8"]) == EXIT_COMPUTE
        assert "outside admissible range" in capsys.readouterr().err

    def test_from_yaml_file(self, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        config.write_text("model:\n  type: cycle\n  n: 3\n  channel: relaxation\n  gamma0: 1\n  c: 0.3\n")
        out = tmp_path / "spectrum.json"
        assert main(["spectrum", "--config", str(config), "--out", str(out)]) == EXIT_OK
        assert "✅" in capsys.readouterr().out
        assert json.loads(out.read_text())["n_eigvals"] == 64


class TestScan:
    def test_writes_csv_meta_and_plot(self, tmp_path, capsys):
        out = tmp_path / "scan.csv"
        plot = tmp_path / "scan.svg"
        argv = ["scan", "--gamma0", "1", "--j", "0.25", "--axis1", "c:0:1:11",
                "--axis2", "j:0.1:0.3:3", "--jobs", "1", "--out", str(out), "--plot", str(plot)]
        assert main(argv) == EXIT_OK
        frame = pd.read_csv(out, comment="#")
        assert len(frame) == 33
        assert plot.read_text().count("<svg") == 1
        meta = json.loads(out.with_suffix(".meta.json").read_text())
        assert "timestamp" in meta

    def test_worker_count_is_invisible(self, tmp_path):
        outputs = []
        for jobs in ("1", "2"):
            out = tmp_path / f"scan{jobs}.csv"
            argv = ["scan", "--gamma0", "1", "--j", "0.25", "--axis1", "c:0:1:9", "--jobs", jobs, "--out", str(out)]
            assert main(argv) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_single_step_axis(self, capsys):
        assert main(["scan", "--gamma0", "1", "--axis1", "c:0:1:1"]) == EXIT_CONFIG
        assert "at least 2 steps" in capsys.readouterr().err

    def test_malformed_axis(self, capsys):
        assert main(["scan", "--gamma0", "1", "--axis1", "c:0:1"]) == EXIT_CONFIG


class TestSeamAndFit:
    @pytest.fixture
    def scan_csv(self, tmp_path):
        out = tmp_path / "dephasing.csv"
        argv = ["scan", "--gamma0", "1", "--j", "0.25", "--axis1", "c:0:1:201", "--jobs", "1", "--out", str(out)]
        assert main(argv) == EXIT_OK
        return out

    def test_seam_from_csv(self, scan_csv, capsys):
        capsys.readouterr()
        payload = run_json(capsys, ["seam", "--csv", str(scan_csv)])
        locations = [point["axis1"] for point in payload["seam"]]
        assert locations == [pytest.approx(0.5)]

    def test_fit_from_csv(self, scan_csv, capsys):
        capsys.readouterr()
        payload = run_json(capsys, ["fit", "--csv", str(scan_csv), "--mu-ep", "0.5", "--window", "0.015", "0.1"])
        assert payload["exponent"] == pytest.approx(-0.5, abs=0.1)
        assert payload["n_points"] >= 8

    def test_fit_window_without_points(self, scan_csv, capsys):
        argv = ["fit", "--csv", str(scan_csv), "--mu-ep", "0.5", "--window", "0.6", "0.7"]
        assert main(argv) == EXIT_COMPUTE

    def test_missing_csv(self, tmp_path, capsys):
        assert main(["seam", "--csv", str(tmp_path / "nope.csv")]) == EXIT_CONFIG


class TestDefect:
    def test_at_exceptional_point(self, capsys):
        payload = run_json(capsys, ["defect", *DEPHASING_EP, "--lambda=-1,0"])
        record = payload["records"][0]
        assert (record["delta1"], record["delta2"]) == (1, 2)
        assert record["snapped"] is True
        assert payload["defective"] is True

    def test_all_clusters_off_exceptional_point(self, capsys):
        payload = run_json(capsys, ["defect", "--gamma0", "1", "--c", "0.05", "--j", "0.5"])
        assert payload["defective"] is False

    def test_bad_lambda(self, capsys):
        assert main(["defect", *DEPHASING_EP, "--lambda", "minus-one"]) == EXIT_CONFIG


class TestPropagate:
    def test_trajectory_csv(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        argv = ["propagate", "--gamma0", "1", "--channel", "relaxation", "--t-max", "1", "--t-steps", "11",
                "--coherence", "1,2", "--out", str(out)]
        assert main(argv) == EXIT_OK
        text = out.read_text()
        assert text.startswith("# epscope trajectory v")
        frame = pd.read_csv(out, comment="#")
        assert list(frame.columns) == ["time", "trace", "pop_1", "pop_2", "re_rho_1_2", "im_rho_1_2"]
        assert frame["pop_1"].iloc[0] == pytest.approx(1.0)
        assert frame["trace"].sub(1.0).abs().max() < 1e-12

    def test_unknown_preset(self, capsys):
        assert main(["propagate", "--gamma0", "1", "--preset", "bell"]) == EXIT_CONFIG
        assert "preset" in capsys.readouterr().err


class TestValidate:
    def test_coarse_rank_tol_fails(self, capsys):
        assert main(["validate", "--rank-tol", "0.5"]) == EXIT_VALIDATION
        captured = capsys.readouterr()
        assert "❌" in captured.out
        assert "defect_at_ep" in captured.err

    def test_non_positive_rank_tol(self, capsys):
        assert main(["validate", "--rank-tol", "0"]) == EXIT_CONFIG


class TestParser:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert "epscope" in capsys.readouterr().out

    def test_command_required(self, capsys):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2
