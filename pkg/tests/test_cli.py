import os
import stat

import numpy as np
import pytest

from psrelay.cli import (CSV_HEADER, ConfigError, ExperimentConfig, main,
                         compute_sweep, parse_config, run_solve, run_sweep,
                         run_validate, sweep_values_dbm)
from psrelay.oracle import GridSpec


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SMALL_SWEEP = """
trials = 4
sweep_start_dbm = 0
sweep_stop_dbm = 10
sweep_step_dbm = 5
base_seed = 99
"""

IDENTITY_2X2 = "2 2\n1:0 0:0\n0:0 1:0\n2 2\n1:0 0:0\n0:0 1:0\n"


class TestConfigParsing:
    def test_defaults_and_overrides(self, tmp_path):
        cfg = parse_config(write(tmp_path, "c.txt",
                                 "trials = 7\n# comment line\neta = 0.5\n"))
        assert cfg.trials == 7 and cfg.eta == 0.5
        assert cfg.p_source_dbm == 30.0  # untouched default

    def test_unknown_key_rejected_with_line(self, tmp_path):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config(write(tmp_path, "c.txt", "trials = 3\nbogus_key = 1\n"))

    def test_malformed_line(self, tmp_path):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config(write(tmp_path, "c.txt", "just some words\n"))

    def test_bad_value_type(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config(write(tmp_path, "c.txt", "trials = many\n"))

    def test_validation_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write(tmp_path, "c.txt", "sweep_variable = bogus\n"))
        with pytest.raises(ConfigError):
            parse_config(write(tmp_path, "c.txt", "sweep_step_dbm = 0\n"))
        with pytest.raises(ConfigError):
            parse_config(write(tmp_path, "c.txt",
                               "sweep_start_dbm = 10\nsweep_stop_dbm = 0\n"))

    def test_sweep_values(self):
        cfg = ExperimentConfig(sweep_start_dbm=-20, sweep_stop_dbm=30, sweep_step_dbm=5)
        vals = sweep_values_dbm(cfg)
        assert vals == [-20, -15, -10, -5, 0, 5, 10, 15, 20, 25, 30]


class TestRunSolve:
    def test_deterministic_report(self):
        cfg = ExperimentConfig(base_seed=5, trials=1)
        assert run_solve(cfg) == run_solve(cfg)

    def test_identity_channels_dominance(self, tmp_path):
        chan = write(tmp_path, "id.txt", IDENTITY_2X2)
        cfg = ExperimentConfig(m_src=2, l_relay=2, n_dst=2, d_streams=2)
        report = run_solve(cfg, channel_path=chan)
        caps = [float(line.split(":")[1]) for line in report.splitlines()
                if line.strip().startswith("capacity_bits")]
        assert len(caps) == 2
        assert caps[1] >= caps[0] - 1e-9

    def test_eta_zero_gives_zero_capacities(self):
        cfg = ExperimentConfig(eta=0.0, base_seed=3)
        report = run_solve(cfg)
        caps = [float(line.split(":")[1]) for line in report.splitlines()
                if line.strip().startswith("capacity_bits")]
        assert caps == [0.0, 0.0]

    def test_channel_dimension_mismatch(self, tmp_path):
        chan = write(tmp_path, "id.txt", IDENTITY_2X2)
        cfg = ExperimentConfig()  # 4x4 antennas
        with pytest.raises(ValueError, match="dimensions"):
            run_solve(cfg, channel_path=chan)


class TestRunSweep:
    def test_header_and_determinism(self, tmp_path):
        cfg = parse_config(write(tmp_path, "cfg.txt", SMALL_SWEEP))
        out1 = str(tmp_path / "a.csv")
        out2 = str(tmp_path / "b.csv")
        run_sweep(cfg, output_path=out1, jobs=1)
        run_sweep(cfg, output_path=out2, jobs=2)
        b1 = open(out1, "rb").read()
        b2 = open(out2, "rb").read()
        assert b1 == b2
        assert b1.decode().splitlines()[0] == CSV_HEADER

    def test_row_shape_and_converged_counts(self, tmp_path):
        cfg = parse_config(write(tmp_path, "cfg.txt", SMALL_SWEEP))
        rows = compute_sweep(cfg, jobs=1)
        assert len(rows) == 3
        for row in rows:
            assert 0 <= row.trials_converged_case1 <= cfg.trials
            assert 0 <= row.trials_converged_case2 <= cfg.trials
            assert row.mean_capacity_case2 >= row.mean_capacity_case1 - 1e-9


class TestRunValidate:
    def test_d2_case1_passes_and_deterministic(self):
        cfg = ExperimentConfig(m_src=2, l_relay=2, n_dst=2, d_streams=2,
                               validate_instances=3, validate_case="1")
        grid = GridSpec(eps_steps=41, simplex_steps=21, refine_rounds=2)
        rep1 = run_validate(cfg, grid=grid)
        rep2 = run_validate(cfg, grid=grid)
        assert rep1 == rep2
        assert "PASS" in rep1

    def test_dimension_guard(self):
        cfg = ExperimentConfig(validate_instances=1)  # D = 4
        with pytest.raises(ConfigError, match="d_streams"):
            run_validate(cfg)


class TestMainExitCodes:
    def test_success(self, tmp_path, capsys):
        cfg = write(tmp_path, "cfg.txt", "eta = 0.9\nbase_seed = 2\n")
        assert main(["solve", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "capacity_bits" in out

    def test_seed_flag_changes_report(self, tmp_path, capsys):
        assert main(["solve", "--seed", "1"]) == 0
        rep1 = capsys.readouterr().out
        assert main(["solve", "--seed", "2"]) == 0
        rep2 = capsys.readouterr().out
        assert rep1 != rep2

    def test_config_error_exit_2(self, tmp_path, capsys):
        cfg = write(tmp_path, "cfg.txt", "bogus = 1\n")
        assert main(["solve", "--config", cfg]) == 2
        assert "unknown key" in capsys.readouterr().err

    def test_missing_config_exit_2(self, capsys):
        assert main(["solve", "--config", "/nonexistent/cfg.txt"]) == 2

    def test_bad_channel_file_exit_2(self, tmp_path, capsys):
        chan = write(tmp_path, "chan.txt", "2 2\n1:0\n")
        assert main(["solve", "--channel-file", chan]) == 2

    def test_unwritable_output_exit_4(self, tmp_path, capsys):
        cfg = write(tmp_path, "cfg.txt", SMALL_SWEEP.replace("trials = 4", "trials = 1"))
        target = str(tmp_path / "nodir" / "out.csv")
        assert main(["sweep", "--config", cfg, "--output", target, "--jobs", "1"]) == 4

    def test_usage_error_exit_2(self, capsys):
        assert main(["solve", "--mode", "bogus"]) == 2

    def test_validate_subcommand(self, tmp_path, capsys):
        cfg = write(tmp_path, "cfg.txt",
                    "m_src = 2\nl_relay = 2\nn_dst = 2\nd_streams = 2\n"
                    "validate_instances = 1\nvalidate_case = 1\n")
        assert main(["validate", "--config", cfg]) == 0
        assert "PASS" in capsys.readouterr().out
