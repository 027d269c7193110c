import os
import subprocess
import sys

import numpy as np
import pytest

from noisefold.cli import DEFAULTS, load_config, main
from noisefold.errors import ConfigError


def run_cli(tmp_path, *sets, config=None, extra=()):
    argv = ["run"]
    if config is not None:
        path = tmp_path / "cfg.toml"
        path.write_text(config)
        argv += ["--config", str(path)]
    for assignment in sets:
        argv += ["--set", assignment]
    argv += list(extra)
    return main(argv)


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


class TestConfig:
    def test_defaults_complete(self):
        cfg = load_config(None, [])
        assert cfg["experiment"] in DEFAULTS["experiment"]
        assert cfg["grid"]["n_steps"] >= 1

    def test_file_merge_and_set_override(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('experiment = "verify-y-map"\n[strengths]\nlambda = 0.07\n')
        cfg = load_config(str(path), ["strengths.delta=0.11", "grid.n_steps=12"])
        assert cfg["experiment"] == "verify-y-map"
        assert cfg["strengths"]["lambda"] == 0.07
        assert cfg["strengths"]["delta"] == 0.11
        assert cfg["grid"]["n_steps"] == 12

    def test_set_parses_toml_literals(self):
        cfg = load_config(None, ['bath.omega_k=[1.0, 1.5]', 'bath.g_k=[0.1, 0.2]',
                                 'plot=true', 'convention="halved"'])
        assert cfg["bath"]["omega_k"] == [1.0, 1.5]
        assert cfg["plot"] is True
        assert cfg["convention"] == "halved"

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ["nonsense.key=1"])

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ['experiment="frobnicate"'])
        with pytest.raises(ConfigError):
            load_config(None, ["grid.n_steps=0"])
        with pytest.raises(ConfigError):
            load_config(None, ["noise.sigma=-2.0"])
        with pytest.raises(ConfigError):
            load_config(None, ['bath.omega_k=[1.0]', 'bath.g_k=[0.1, 0.2]'])

    def test_env_seed_override(self, monkeypatch):
        monkeypatch.setenv("NOISEFOLD_SEED", "31415")
        cfg = load_config(None, [])
        assert cfg["noise"]["seed"] == 31415
        monkeypatch.setenv("NOISEFOLD_SEED", "not-an-int")
        with pytest.raises(ConfigError):
            load_config(None, [])

    def test_missing_file_is_config_error(self, tmp_path):
        argv = ["run", "--config", str(tmp_path / "absent.toml")]
        assert main(argv) == 2


class TestRuns:
    def test_y_map_run_passes(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli(tmp_path, 'experiment="verify-y-map"', "grid.n_steps=40",
                       'output_dir="out"')
        assert code == 0
        report = read(tmp_path / "out" / "report.txt")
        assert "RESULT: PASS" in report
        assert "seed: 20260808" in report
        assert "convention: paper" in report
        assert "FAIL" not in report

    def test_zeeman_outputs(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli(tmp_path, 'experiment="zeeman"', "grid.n_steps=80",
                       "noise.R=400", 'output_dir="out"', extra=["--plot"])
        assert code == 0
        traj = read(tmp_path / "out" / "trajectory.csv").splitlines()
        assert traj[0] == ("t,rho00_re,rho00_im,rho01_re,rho01_im,"
                           "rho10_re,rho10_im,rho11_re,rho11_im")
        assert len(traj) == 82
        coeffs = read(tmp_path / "out" / "coefficients.csv").splitlines()
        assert coeffs[0] == "t,D_R,D_I,Dp_R,Dp_I,D_C,D_total,D_cavity,D_Bfield"
        svg = read(tmp_path / "out" / "coherence.svg")
        assert svg.startswith("<svg")
        assert (tmp_path / "out" / "coefficients.svg").exists()

    def test_zeeman_without_classical_noise(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli(tmp_path, 'experiment="zeeman"', "grid.n_steps=60",
                       "noise.sigma=0.0", "noise.R=4", 'output_dir="out"')
        assert code == 0
        rows = read(tmp_path / "out" / "coefficients.csv").splitlines()[1:]
        cols = np.array([[float(v) for v in row.split(",")] for row in rows])
        d_c, d_total, d_cavity = cols[:, 5], cols[:, 6], cols[:, 7]
        assert np.all(d_c == 0.0)
        assert np.array_equal(d_total, d_cavity)

    def test_byte_identical_reruns(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert run_cli(tmp_path, 'experiment="zeeman"', "grid.n_steps=60",
                       "noise.R=64", 'output_dir="a"') == 0
        assert run_cli(tmp_path, 'experiment="zeeman"', "grid.n_steps=60",
                       "noise.R=64", 'output_dir="b"') == 0
        for name in ("trajectory.csv", "coefficients.csv"):
            assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)

    def test_halved_convention_quarter_cavity_rate(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        run_cli(tmp_path, 'experiment="zeeman"', "grid.n_steps=50", "noise.R=4",
                'output_dir="paper"')
        run_cli(tmp_path, 'experiment="zeeman"', "grid.n_steps=50", "noise.R=4",
                'convention="halved"', 'output_dir="halved"')
        report = read(tmp_path / "halved" / "report.txt")
        assert "convention: halved" in report

        def col(d, k):
            rows = read(tmp_path / d / "coefficients.csv").splitlines()[1:]
            return np.array([float(r.split(",")[k]) for r in rows])

        assert np.allclose(col("paper", 7), 4.0 * col("halved", 7), atol=1e-15)
        assert np.array_equal(col("paper", 8), col("halved", 8))

    def test_failing_assertion_exits_3(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli(tmp_path, 'experiment="verify-cancellation"',
                       "grid.n_steps=30", "checks.cancellation_instances=2",
                       "checks.cancellation_tol=1e-18", 'output_dir="out"')
        assert code == 3
        assert "FAIL" in read(tmp_path / "out" / "report.txt")

    def test_capacity_error_exits_4(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli(tmp_path, 'experiment="zeeman"', "bath.n_max=5000",
                       'output_dir="out"')
        assert code == 4

    def test_bad_experiment_exits_2(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert run_cli(tmp_path, 'experiment="nope"') == 2

    def test_interference_reports_detuned_diagnostic(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = run_cli(tmp_path, 'experiment="interference-l21"',
                       "grid.n_steps=60", "bath.omega_k=[1.4]",
                       'output_dir="out"')
        assert code == 0
        report = read(tmp_path / "out" / "report.txt")
        assert "detuned-instance two-path mismatch" in report

    def test_console_entry_point(self, tmp_path):
        out = subprocess.run(
            [sys.executable, "-m", "noisefold.cli", "run",
             "--set", 'experiment="verify-y-map"', "--set", "grid.n_steps=30",
             "--set", f'output_dir="{tmp_path / "out"}"'],
            capture_output=True, text=True)
        assert out.returncode == 0


class TestEnvSeed:
    def test_env_seed_recorded_in_report(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("NOISEFOLD_SEED", "777")
        run_cli(tmp_path, 'experiment="verify-y-map"', "grid.n_steps=30",
                'output_dir="out"')
        report = read(tmp_path / "out" / "report.txt")
        assert "seed: 777 (from NOISEFOLD_SEED)" in report
