"""Manifest, CSV, and PGM serialization plus the output-directory contract."""

import json
import math

import numpy as np
import pytest

from subquantum.ensembles import DensityGrid, HSeries
from subquantum.errors import ConfigurationError
from subquantum.experiments import (ExponentialFit, FreezingParams, FreezingResult,
                                    RelaxationParams, RelaxationResult,
                                    SignallingParams, SignallingResult)
from subquantum.reporting import (RunConfig, config_hash, fmt, params_from_dict,
                                  params_to_dict, read_grid_csv, read_grid_pgm,
                                  read_manifest, write_csv, write_grid_csv,
                                  write_grid_pgm, write_h_series_csv,
                                  write_manifest, write_outputs)
from subquantum.states import BoxGeometry
from subquantum.trajectories import IntegratorConfig

L = math.pi


class TestFmt:
    def test_floats_round_trip(self):
        for x in (0.1, 1.0 / 3.0, 1e-17, 6.02214076e23, -0.0, 4 * L):
            assert float(fmt(x)) == x

    def test_shortest_form(self):
        assert fmt(0.1) == "0.1"
        assert fmt(2.0) == "2.0"

    def test_non_floats(self):
        assert fmt(5) == "5"
        assert fmt(np.int64(-3)) == "-3"
        assert fmt(True) == "true"
        assert fmt(np.bool_(False)) == "false"
        assert fmt("quiet") == "quiet"
        assert fmt(np.float64(0.25)) == "0.25"


class TestRunConfig:
    def test_rejects_mismatched_params(self):
        with pytest.raises(ConfigurationError):
            RunConfig("relax", SignallingParams(), "out")
        with pytest.raises(ConfigurationError):
            RunConfig("thermalize", RelaxationParams(), "out")

    def test_seed_and_validate(self):
        cfg = RunConfig("relax", RelaxationParams(seed=99), "out")
        assert cfg.seed == 99
        cfg.validate()
        bad = RunConfig("relax", RelaxationParams(seed=-1), "out")
        with pytest.raises(ConfigurationError):
            bad.validate()
        invalid = RunConfig("relax", RelaxationParams(subsamples=0), "out")
        with pytest.raises(ConfigurationError):
            invalid.validate()


class TestParamsRoundTrip:
    def test_each_subcommand(self):
        cases = {
            "relax": RelaxationParams(seed=5, cells=16, subsamples=2,
                                      snapshot_times=(0.0, 1.5),
                                      integrator=IntegratorConfig(rel_tol=1e-7)),
            "signal": SignallingParams(seed=8, pairs=((1, 1), (2, 2)),
                                       times=(0.5, 1.0), n_samples=20_000),
            "freeze": FreezingParams(seed=4, values=(1.0, 0.25), final_time=2.0),
        }
        for sub, params in cases.items():
            rebuilt = params_from_dict(sub, params_to_dict(params))
            assert rebuilt == params

    def test_unknown_key_named(self):
        with pytest.raises(ConfigurationError, match="wavelength"):
            params_from_dict("relax", {"wavelength": 3})

    def test_config_hash_sensitivity(self):
        a = config_hash("relax", RelaxationParams())
        b = config_hash("relax", RelaxationParams())
        c = config_hash("relax", RelaxationParams(seed=123))
        assert a == b
        assert a != c
        assert a.startswith("sha256:")


class TestManifest:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig("freeze", FreezingParams(seed=3, values=(1.0, 0.5)),
                        str(tmp_path / "run"))
        path = tmp_path / "manifest.json"
        write_manifest(path, cfg)
        loaded = read_manifest(path)
        assert loaded.subcommand == "freeze"
        assert loaded.params == cfg.params
        assert loaded.out_dir == str(tmp_path)

    def test_tamper_detected(self, tmp_path):
        cfg = RunConfig("relax", RelaxationParams(), str(tmp_path))
        path = tmp_path / "manifest.json"
        write_manifest(path, cfg)
        doc = json.loads(path.read_text())
        doc["params"]["seed"] = 12345
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigurationError, match="config_hash"):
            read_manifest(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"subcommand": "relax"}))
        with pytest.raises(ConfigurationError):
            read_manifest(path)


class TestCsv:
    def test_values_survive_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = [(0.1, 1.0 / 3.0), (1e-17, 2.0)]
        write_csv(path, ["a", "b"], rows)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "a,b"
        for line, row in zip(lines[1:], rows):
            got = tuple(float(v) for v in line.split(","))
            assert got == row

    def test_h_series_rows(self, tmp_path):
        series = HSeries(times=np.array([0.0, 1.0]), values=np.array([0.5, 0.25]),
                         cells=16, subsamples=3, exclusion_fractions=np.zeros(2),
                         error_estimates=np.full(2, 1e-3), deficits=np.zeros(2))
        path = tmp_path / "h.csv"
        write_h_series_csv(path, series)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,h,exclusion_rate"
        assert len(lines) == 3

    def test_empty_series_header_only(self, tmp_path):
        series = HSeries(times=np.empty(0), values=np.empty(0), cells=16,
                         subsamples=3, exclusion_fractions=np.empty(0),
                         error_estimates=np.empty(0), deficits=np.empty(0))
        path = tmp_path / "h.csv"
        write_h_series_csv(path, series)
        assert path.read_text() == "t,h,exclusion_rate\n"

    def test_grid_round_trip(self, tmp_path):
        gen = np.random.Generator(np.random.Philox(key=3))
        vals = gen.random((4, 4))
        vals /= vals.sum() * (L / 4) ** 2
        grid = DensityGrid(BoxGeometry(2), 4, vals, "tabulated")
        path = tmp_path / "g.csv"
        write_grid_csv(path, grid)
        assert np.array_equal(read_grid_csv(path), vals)

    def test_grid_one_dim_round_trip(self, tmp_path):
        vals = np.full(4, 1.0 / L)
        grid = DensityGrid(BoxGeometry(1), 4, vals, "tabulated")
        path = tmp_path / "g.csv"
        write_grid_csv(path, grid)
        assert np.array_equal(read_grid_csv(path), vals)


class TestPgm:
    def test_round_trip_within_quantization(self, tmp_path):
        gen = np.random.Generator(np.random.Philox(key=5))
        vals = gen.random((8, 8)) + 0.05
        vals /= vals.sum() * (L / 8) ** 2
        grid = DensityGrid(BoxGeometry(2), 8, vals, "tabulated")
        path = tmp_path / "g.pgm"
        write_grid_pgm(path, grid)
        loaded, peak = read_grid_pgm(path)
        assert peak == float(vals.max())
        assert np.max(np.abs(loaded - vals)) <= peak / 65535.0

    def test_header_layout(self, tmp_path):
        grid = DensityGrid(BoxGeometry(1), 4, np.full(4, 1.0 / L), "tabulated")
        path = tmp_path / "g.pgm"
        write_grid_pgm(path, grid)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n# max=")
        assert b"4 1\n65535\n" in blob

    def test_rejects_non_p5(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n")
        with pytest.raises(ConfigurationError):
            read_grid_pgm(path)


def uniform_grid(cells=4, dim=1):
    geom = BoxGeometry(dim)
    shape = (cells,) if dim == 1 else (cells, cells)
    vals = np.full(shape, 1.0 / L**dim)
    return DensityGrid(geom, cells, vals, "tabulated")


def tiny_relax_result(n_snaps=2, with_fit=True):
    times = np.linspace(0.0, 1.0, n_snaps) if n_snaps else np.empty(0)
    series = HSeries(times=times, values=np.full(n_snaps, 0.3), cells=4,
                     subsamples=2, exclusion_fractions=np.zeros(n_snaps),
                     error_estimates=np.full(n_snaps, 1e-3),
                     deficits=np.zeros(n_snaps))
    fit = ExponentialFit(rate=0.5, amplitude=1.0, r_squared=0.99,
                         residuals=(0.0,) * n_snaps,
                         fitted_times=tuple(times)) if with_fit else None
    grids = tuple(uniform_grid(dim=2) for _ in range(n_snaps))
    params = RelaxationParams(snapshot_times=tuple(times), cells=4, subsamples=2)
    return RelaxationResult(params=params, h_series=series, rho_grids=grids,
                            q_grids=grids, fit=fit)


class TestWriteOutputs:
    def test_relax_files_present(self, tmp_path):
        out = tmp_path / "run"
        cfg = RunConfig("relax", tiny_relax_result().params, str(out))
        written = write_outputs(tiny_relax_result(), cfg, figures=False)
        names = {p.name for p in written}
        assert "manifest.json" in names
        assert "h_series.csv" in names
        assert "h_fit.json" in names
        assert "density_t00.pgm" in names
        assert "born_t01.csv" in names
        reloaded = read_manifest(out / "manifest.json")
        assert reloaded.params == cfg.params

    def test_empty_series_degenerate_run(self, tmp_path):
        result = tiny_relax_result(n_snaps=0, with_fit=False)
        params = RelaxationParams(snapshot_times=(), cells=4, subsamples=2)
        result = RelaxationResult(params=params, h_series=result.h_series,
                                  rho_grids=(), q_grids=(), fit=None)
        cfg = RunConfig("relax", params, str(tmp_path / "run"))
        written = write_outputs(result, cfg, figures=False)
        assert (tmp_path / "run" / "h_series.csv").read_text() == "t,h,exclusion_rate\n"
        assert len(written) == 2

    def test_refuses_nonempty_dir(self, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / "stale.txt").write_text("x")
        cfg = RunConfig("relax", tiny_relax_result().params, str(out))
        with pytest.raises(FileExistsError):
            write_outputs(tiny_relax_result(), cfg, figures=False)
        cfg2 = RunConfig("relax", tiny_relax_result().params, str(out), overwrite=True)
        write_outputs(tiny_relax_result(), cfg2, figures=False)
        assert (out / "h_series.csv").exists()

    def test_partial_outputs_removed_on_failure(self, tmp_path, monkeypatch):
        import subquantum.reporting as reporting

        def boom(path, grid):
            raise OSError("disk full")

        monkeypatch.setattr(reporting, "write_grid_pgm", boom)
        out = tmp_path / "run"
        cfg = RunConfig("relax", tiny_relax_result().params, str(out))
        with pytest.raises(OSError):
            write_outputs(tiny_relax_result(), cfg, figures=False)
        assert not (out / "manifest.json").exists()
        assert not (out / "h_series.csv").exists()

    def test_signal_stats_verdict_rows(self, tmp_path):
        params = SignallingParams(seed=1, t_op=0.5, times=(0.25, 0.75),
                                  n_samples=10_000, null_pairs=2, marginal_cells=4)
        result = SignallingResult(
            params=params, times=np.array([0.25, 0.75]),
            tv=np.array([0.0, 0.3]), thresholds=np.array([0.1, 0.1]),
            null_tv=np.full((2, 2), 0.05),
            marginals_noop=(uniform_grid(), uniform_grid()),
            marginals_op=(uniform_grid(), uniform_grid()),
            exclusion_noop=np.zeros(2), exclusion_op=np.zeros(2),
            verdict="SIGNAL")
        cfg = RunConfig("signal", params, str(tmp_path / "run"))
        write_outputs(result, cfg, figures=False)
        lines = (tmp_path / "run" / "signal_stats.csv").read_text().strip().split("\n")
        assert lines[0] == "t,tv,threshold,verdict"
        assert lines[1].endswith("pre_op")
        assert lines[2].endswith("signal")
        marg = (tmp_path / "run" / "marginals_t01.csv").read_text().strip().split("\n")
        assert marg[0] == "cell,no_op,op"
        assert len(marg) == 5

    def test_freezing_table(self, tmp_path):
        params = FreezingParams(values=(1.0, 0.5), final_time=1.0)
        result = FreezingResult(params=params, values=(1.0, 0.5),
                                residuals=np.array([0.4, 0.8]),
                                h_initial=np.array([1.0, 1.0]),
                                h_final=np.array([0.4, 0.8]),
                                error_estimates=np.full(2, 1e-3),
                                monotone=True, frozen_exceeds_control=None)
        cfg = RunConfig("freeze", params, str(tmp_path / "run"))
        write_outputs(result, cfg, figures=False)
        lines = (tmp_path / "run" / "freezing.csv").read_text().strip().split("\n")
        assert lines == ["sweep_value,residual_ratio", "1.0,0.4", "0.5,0.8"]
