"""End-to-end CLI tests: exit codes, artifacts, determinism."""

import json

import numpy as np
import pytest

from quditpovm.cli import main
from quditpovm.povm import Povm


@pytest.fixture()
def bad_povm_file(tmp_path):
    # non-PSD operator set that still sums to identity
    bad = {
        "dim": 2,
        "labels": ["a", "b"],
        "operators": [
            [[[1.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]],
            [[[-0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]],
        ],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    return path


class TestPovmCommand:
    def test_sic_writes_valid_file(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["--out", str(out), "povm", "--sic"]) == 0
        stdout = capsys.readouterr().out
        assert "valid True" in stdout
        povm = Povm.load(out / "povm_sic.json")
        assert povm.n_outcomes == 4
        assert (out / "manifest.json").exists()

    def test_demo_file(self, tmp_path):
        out = tmp_path / "o"
        assert main(["--out", str(out), "povm", "--demo"]) == 0
        assert (out / "povm_demo.json").exists()

    def test_invalid_file_exits_two(self, tmp_path, bad_povm_file, capsys):
        out = tmp_path / "o"
        code = main(["--out", str(out), "povm", "--file", str(bad_povm_file)])
        assert code == 2
        assert "psd_violation" in capsys.readouterr().out


class TestCompileCommand:
    def test_sic_ten_pulses(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["--out", str(out), "compile", "--povm", "sic"]) == 0
        stdout = capsys.readouterr().out
        assert "pulses 10" in stdout
        d_od = float(stdout.split("roundtrip_d_od")[1].split()[0])
        assert d_od < 1e-9
        assert (out / "schedule.json").exists()
        assert (out / "schedule.txt").exists()

    def test_demo_five_pulses(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["--out", str(out), "compile", "--povm", "demo"]) == 0
        stdout = capsys.readouterr().out
        assert "pulses 5" in stdout
        d_od = float(stdout.split("roundtrip_d_od")[1].split()[0])
        assert d_od < 1e-9

    def test_projective_degenerate_schedule(self, tmp_path, capsys):
        from quditpovm.povm import projective_z_povm

        povm_path = tmp_path / "projz.json"
        projective_z_povm().save(povm_path)
        out = tmp_path / "o"
        assert main(["--out", str(out), "compile", "--povm", str(povm_path)]) == 0
        stdout = capsys.readouterr().out
        d_od = float(stdout.split("roundtrip_d_od")[1].split()[0])
        assert d_od < 1e-9


class TestSimulateCommand:
    def test_demo_sequence_simulation(self, tmp_path):
        out = tmp_path / "o"
        code = main([
            "--out", str(out), "simulate", "--povm", "demo", "--demo-sequence",
            "--durations", "20", "16", "6", "--k", "6",
        ])
        assert code == 0
        report = json.loads((out / "simulate_report.json").read_text())
        assert report["n_pulses"] == 5
        assert 0 < report["d_od"] < 0.5
        sim = Povm.load(out / "simulated_povm.json")
        assert sim.n_outcomes == 4


class TestSweepCommand:
    def test_tiny_sweep_deterministic(self, tmp_path):
        config = {
            "ratios": [40.0],
            "t_max_ns": [None],
            "k": 4,
            "povm": "sic",
            "duration_grid_ns": list(np.arange(18, 145, 36) * 0.222),
        }
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["--out", str(out1), "--config", str(cfg), "sweep"]) == 0
        assert main(["--out", str(out2), "--config", str(cfg), "sweep"]) == 0
        csv1 = (out1 / "sweep.csv").read_bytes()
        csv2 = (out2 / "sweep.csv").read_bytes()
        assert csv1 == csv2
        header = csv1.decode().splitlines()[0]
        assert header == "ej_ec,t_max_ns,d_od,t_total_ns,f_sx01,f_sx12,f_sx23"

    def test_failing_cell_sets_exit_code(self, tmp_path):
        config = {"ratios": [5.0], "t_max_ns": [None], "k": 2, "povm": "sic"}
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config))
        out = tmp_path / "o"
        assert main(["--out", str(out), "--config", str(cfg), "sweep"]) == 1
        body = (out / "sweep.csv").read_text()
        assert "nan" in body


class TestTomoCommand:
    def test_scaling_outputs(self, tmp_path):
        out = tmp_path / "o"
        code = main([
            "--out", str(out), "--seed", "3", "tomo", "--povm", "sic",
            "--shots", "1000", "10000", "--repeats", "1",
        ])
        assert code == 0
        rows = (out / "tomo_scaling.csv").read_text().strip().splitlines()
        assert rows[0] == "n_tomo,d_od"
        assert len(rows) == 3
        fit = json.loads((out / "tomo_fit.json").read_text())
        assert fit["slope"] < 0


class TestEstimateCommand:
    def test_single_qubit_estimate(self, tmp_path):
        obs = tmp_path / "obs.json"
        obs.write_text(json.dumps({"n_qubits": 1, "terms": [[1.0, "Z"]]}))
        state = tmp_path / "state.json"
        state.write_text(json.dumps([[1, 0], [0, 0]]))
        out = tmp_path / "o"
        code = main([
            "--out", str(out), "--seed", "1", "estimate",
            "--observable", str(obs), "--state", str(state),
            "--povm", "sic", "--shots", "200000",
        ])
        assert code == 0
        report = json.loads((out / "estimate.json").read_text())
        assert abs(report["estimate"] - 1.0) < 6 * report["std_error"]
        assert (out / "scatter.csv").exists()

    def test_two_qubit_product(self, tmp_path):
        obs = tmp_path / "obs.json"
        obs.write_text(json.dumps({"n_qubits": 2, "terms": [[1.0, "ZZ"]]}))
        state = tmp_path / "state.json"
        state.write_text(json.dumps([[1, 0], [0, 0], [0, 0], [0, 0]]))
        out = tmp_path / "o"
        code = main([
            "--out", str(out), "estimate", "--observable", str(obs),
            "--state", str(state), "--povm", "sic", "--shots", "50000",
        ])
        assert code == 0
        scatter = (out / "scatter.csv").read_text().strip().splitlines()
        assert scatter[-1].split(",")[-1] == "25"  # second moment total


class TestManifest:
    def test_manifest_contents(self, tmp_path):
        out = tmp_path / "o"
        main(["--out", str(out), "--seed", "7", "povm", "--sic"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "povm"
        assert manifest["seed"] == 7
        assert "quditpovm" in manifest["versions"]
        assert "povm_sic.json" in manifest["outputs"]

    def test_manifest_deterministic(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["--out", str(out1), "povm", "--sic"])
        main(["--out", str(out2), "povm", "--sic"])
        assert (out1 / "manifest.json").read_text() == (
            out2 / "manifest.json"
        ).read_text()
