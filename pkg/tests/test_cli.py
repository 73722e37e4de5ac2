"""Argument parsing, config-file precedence, exit codes, end-to-end runs."""

import json
import math

import pytest

from subquantum.cli import main, parse_cli
from subquantum.errors import ConfigurationError
from subquantum.experiments import FreezingParams, RelaxationParams, SignallingParams

L = math.pi

TINY_RELAX = ["relax", "--modes", "4", "--cells", "8", "--subsamples", "2",
              "--snapshots", "0,0.5", "--seed", "3", "--no-figures"]


class TestParsing:
    def test_relax_defaults_with_overrides(self):
        cfg = parse_cli(["relax", "--seed", "42", "--modes", "4x4",
                         "--out", "runs/r1"])
        assert cfg.subcommand == "relax"
        assert isinstance(cfg.params, RelaxationParams)
        assert cfg.params.seed == 42
        assert cfg.params.mode_max == 4
        assert cfg.params.dim == 2
        assert cfg.params.density == "ground"
        assert cfg.out_dir == "runs/r1"
        assert cfg.overwrite is False

    def test_default_out_dir(self):
        cfg = parse_cli(["relax"])
        assert cfg.out_dir == "runs/relax"

    def test_one_dim_modes_spec(self):
        cfg = parse_cli(["relax", "--modes", "8"])
        assert cfg.params.mode_max == 8
        assert cfg.params.dim == 1

    def test_rectangular_modes_rejected(self):
        with pytest.raises(SystemExit) as err:
            parse_cli(["relax", "--modes", "4x3"])
        assert err.value.code == 2

    def test_freeze_sweep_values(self):
        cfg = parse_cli(["freeze", "--sweep", "velocity", "--values", "1,0.5,0.25"])
        assert isinstance(cfg.params, FreezingParams)
        assert cfg.params.variant == "velocity"
        assert cfg.params.values == (1.0, 0.5, 0.25)

    def test_signal_flag_spellings(self):
        cfg = parse_cli(["signal", "--N", "20000", "--t-op", "0.4",
                         "--pairs", "1:2,2:1", "--null-pairs", "3"])
        assert isinstance(cfg.params, SignallingParams)
        assert cfg.params.n_samples == 20_000
        assert cfg.params.t_op == 0.4
        assert cfg.params.pairs == ((1, 2), (2, 1))
        assert cfg.params.null_pairs == 3

    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as err:
            parse_cli(["relax", "--wavelength", "3"])
        assert err.value.code == 2

    def test_invalid_params_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_cli(["relax", "--subsamples", "0"])


class TestConfigFile:
    def test_flags_override_file(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"n_samples": 40_000, "t_op": 0.3,
                                        "times": [0.2, 0.4, 0.6]}))
        cfg = parse_cli(["signal", "--config", str(cfg_file), "--N", "15000"])
        assert cfg.params.n_samples == 15_000
        assert cfg.params.t_op == 0.3
        assert cfg.params.times == (0.2, 0.4, 0.6)

    def test_manifest_style_file(self, tmp_path):
        cfg_file = tmp_path / "manifest.json"
        cfg_file.write_text(json.dumps({"subcommand": "relax",
                                        "params": {"seed": 9, "mode_max": 3}}))
        cfg = parse_cli(["relax", "--config", str(cfg_file)])
        assert cfg.params.seed == 9
        assert cfg.params.mode_max == 3

    def test_subcommand_mismatch_rejected(self, tmp_path):
        cfg_file = tmp_path / "manifest.json"
        cfg_file.write_text(json.dumps({"subcommand": "signal", "params": {}}))
        with pytest.raises(ConfigurationError):
            parse_cli(["relax", "--config", str(cfg_file)])

    def test_malformed_json_rejected(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text("{not json")
        with pytest.raises(ConfigurationError):
            parse_cli(["relax", "--config", str(cfg_file)])

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            parse_cli(["relax", "--config", str(tmp_path / "absent.json")])


class TestMain:
    def test_usage_error_returns_two(self, capsys):
        code = main(["relax", "--modes", "1x1"])
        assert code == 2
        assert "usage error" in capsys.readouterr().err

    def test_tiny_run_end_to_end(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(TINY_RELAX + ["--out", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "relax: H" in printed
        assert (out / "manifest.json").exists()
        assert (out / "h_series.csv").exists()
        assert (out / "density_t01.pgm").exists()

    def test_nonempty_dir_without_overwrite_is_io_error(self, tmp_path, capsys):
        out = tmp_path / "run"
        out.mkdir()
        (out / "stale.txt").write_text("x")
        code = main(TINY_RELAX + ["--out", str(out)])
        assert code == 4
        assert "i/o error" in capsys.readouterr().err

    def test_numerical_abort_returns_three(self, tmp_path, capsys):
        # A 4pi backtrack capped at 40 steps aborts nearly every trajectory.
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({
            "mode_max": 4, "dim": 1, "cells": 8, "subsamples": 2,
            "snapshot_times": [0.0, 4 * L],
            "integrator": {"max_steps": 40}}))
        code = main(["relax", "--config", str(cfg_file),
                     "--out", str(tmp_path / "run"), "--no-figures"])
        assert code == 3
        assert "numerical abort" in capsys.readouterr().err
        assert not (tmp_path / "run" / "manifest.json").exists()

    def test_rerun_from_manifest_reproduces_bytes(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        assert main(TINY_RELAX + ["--out", str(first)]) == 0
        assert main(["relax", "--config", str(first / "manifest.json"),
                     "--out", str(second), "--no-figures"]) == 0
        for name in ("h_series.csv", "density_t00.csv", "density_t01.pgm"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_figures_rendered_alongside_tables(self, tmp_path):
        out = tmp_path / "run"
        args = [a for a in TINY_RELAX if a != "--no-figures"]
        assert main(args + ["--out", str(out)]) == 0
        assert (out / "h_series.png").exists()
        assert (out / "densities.png").exists()
        assert (out / "h_series.csv").exists()

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        one = tmp_path / "one"
        three = tmp_path / "three"
        assert main(TINY_RELAX + ["--out", str(one), "--threads", "1"]) == 0
        assert main(TINY_RELAX + ["--out", str(three), "--threads", "3"]) == 0
        assert (one / "h_series.csv").read_bytes() == (three / "h_series.csv").read_bytes()
        manifest_one = json.loads((one / "manifest.json").read_text())
        manifest_three = json.loads((three / "manifest.json").read_text())
        assert manifest_one == manifest_three
