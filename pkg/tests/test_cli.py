"""Tests for the config-file format and the smsim command-line interface."""

import numpy as np
import pytest

from smsim.cli import main
from smsim.config import SimConfig, parse_config_file, parse_snr_grid
from smsim.harness import CSV_HEADER, read_csv

GOOD_CONFIG = """\
# quick desk-scale experiment
M = 16
M_RF = 8
K = 2
n_t = 2
L = 4
P = 2
Q = 4
J = 1
rho_bs = 0.3
rho_us = 0.0
ae_scheme = direct
phi = 1
detectors = gsp,mmse
snr_grid_db = 5,15
trials = 5
seed = 123
channel_redraw = per-block
"""


class TestConfigFile:
    def test_parse_complete_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(GOOD_CONFIG)
        cfg = parse_config_file(path)
        assert cfg.M == 16 and cfg.M_RF == 8
        assert cfg.detectors == ("gsp", "mmse")
        assert cfg.snr_grid_db == (5.0, 15.0)
        assert cfg.channel_redraw == "per-block"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("M = 16\nbogus_key = 3\n")
        with pytest.raises(ValueError, match="bogus_key"):
            parse_config_file(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "dup.cfg"
        path.write_text("M = 16\nM = 32\n")
        with pytest.raises(ValueError, match="duplicate"):
            parse_config_file(path)

    def test_invalid_values_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("L = 5\n")
        with pytest.raises(ValueError):
            parse_config_file(path)

    def test_config_invariants(self):
        with pytest.raises(ValueError, match="M_RF"):
            SimConfig(M=8, M_RF=9)
        with pytest.raises(ValueError, match="P"):
            SimConfig(P=9, Q=8)
        with pytest.raises(ValueError, match="detectors"):
            SimConfig(detectors=("gsp", "zf"))

    def test_snr_grid_forms(self):
        assert parse_snr_grid("0:2:6") == (0.0, 2.0, 4.0, 6.0)
        assert parse_snr_grid("0:4:10") == (0.0, 4.0, 8.0)
        assert parse_snr_grid("1,3.5,7") == (1.0, 3.5, 7.0)
        with pytest.raises(ValueError):
            parse_snr_grid("0:2")


class TestCli:
    def test_run_writes_csv(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(GOOD_CONFIG)
        out = tmp_path / "results.csv"
        rc = main(["run", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 2 * 2  # two SNRs x two detectors
        assert "wrote" in capsys.readouterr().out

    def test_run_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(GOOD_CONFIG)
        out = tmp_path / "r.csv"
        rc = main(["run", "--config", str(cfg), "--out", str(out),
                   "--snr-db", "10", "--trials", "3", "--seed", "9",
                   "--detectors", "gsp"])
        assert rc == 0
        records = read_csv(out)
        assert len(records) == 1
        assert records[0].snr_db == 10.0
        assert records[0].trials == 3
        assert records[0].seed == 9

    def test_run_reproducible_bytes(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(GOOD_CONFIG)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_run_with_plot(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(GOOD_CONFIG)
        out = tmp_path / "results.csv"
        rc = main(["run", "--config", str(cfg), "--out", str(out), "--plot"])
        assert rc == 0
        figure = tmp_path / "results.png"
        assert figure.exists() and figure.stat().st_size > 0

    def test_plot_from_csv(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(GOOD_CONFIG)
        out = tmp_path / "results.csv"
        main(["run", "--config", str(cfg), "--out", str(out)])
        rc = main(["plot", str(out), "--out", str(tmp_path / "fig.png")])
        assert rc == 0
        assert (tmp_path / "fig.png").exists()

    def test_skip_warning_on_stderr(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(GOOD_CONFIG.replace("detectors = gsp,mmse",
                                           "detectors = ml,gsp"))
        out = tmp_path / "results.csv"
        rc = main(["run", "--config", str(cfg), "--out", str(out),
                   "--snr-db", "10", "--trials", "2"])
        assert rc == 0
        captured = capsys.readouterr()
        assert "skipped" in captured.err
        assert "search set size" in captured.err
