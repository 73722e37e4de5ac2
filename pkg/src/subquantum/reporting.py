"""Serialization of runs: manifest, CSV tables, PGM density images.

Formats are chosen to be diffable and reproducible: JSON for the manifest,
CSV with shortest-round-trip decimal floats for tables, 16-bit binary PGM
for density images.  Nothing written here depends on wall time or worker
count, so a rerun from a saved manifest reproduces every byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .ensembles import DensityGrid, HSeries
from .errors import ConfigurationError
from .experiments import (FreezingParams, FreezingResult, RelaxationParams,
                          RelaxationResult, SignallingParams, SignallingResult)
from .trajectories import IntegratorConfig

PARAM_TYPES = {"relax": RelaxationParams, "signal": SignallingParams,
               "freeze": FreezingParams}


def fmt(value) -> str:
    """Shortest decimal that round-trips: repr for floats, str for ints."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


@dataclass(frozen=True)
class RunConfig:
    """A fully specified run: which experiment, its parameters, where to write."""

    subcommand: str
    params: object
    out_dir: str
    overwrite: bool = False

    def __post_init__(self):
        if self.subcommand not in PARAM_TYPES:
            raise ConfigurationError(f"unknown subcommand {self.subcommand!r}")
        expected = PARAM_TYPES[self.subcommand]
        if not isinstance(self.params, expected):
            raise ConfigurationError(
                f"subcommand {self.subcommand} needs {expected.__name__}, "
                f"got {type(self.params).__name__}")

    @property
    def seed(self) -> int:
        return self.params.seed

    def validate(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError(f"seed must fit in 64 bits, got {self.seed}")
        self.params.validate()


def params_to_dict(params) -> dict:
    return asdict(params)


def params_from_dict(subcommand: str, data: dict):
    cls = PARAM_TYPES.get(subcommand)
    if cls is None:
        raise ConfigurationError(f"unknown subcommand {subcommand!r}")
    d = dict(data)
    names = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(d) - names
    if unknown:
        raise ConfigurationError(f"unknown parameter keys: {sorted(unknown)}")
    if "integrator" in d and isinstance(d["integrator"], dict):
        d["integrator"] = IntegratorConfig(**d["integrator"])
    for key in ("snapshot_times", "times", "product_modes"):
        if key in d and d[key] is not None:
            d[key] = tuple(d[key])
    if "values" in d and d["values"] is not None:
        d["values"] = tuple(float(v) for v in d["values"])
    if "pairs" in d and d["pairs"] is not None:
        d["pairs"] = tuple(tuple(int(m) for m in pair) for pair in d["pairs"])
    return cls(**d)


def config_hash(subcommand: str, params) -> str:
    canon = json.dumps({"subcommand": subcommand, "params": params_to_dict(params)},
                       sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(path: Path, config: RunConfig):
    doc = {
        "subcommand": config.subcommand,
        "seed": config.seed,
        "params": params_to_dict(config.params),
        "tool_version": __version__,
        "config_hash": config_hash(config.subcommand, config.params),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path: Path, out_dir: str | None = None,
                  overwrite: bool = False) -> RunConfig:
    doc = json.loads(Path(path).read_text())
    for key in ("subcommand", "params"):
        if key not in doc:
            raise ConfigurationError(f"manifest missing key {key!r}")
    params = params_from_dict(doc["subcommand"], doc["params"])
    stated = doc.get("config_hash")
    actual = config_hash(doc["subcommand"], params)
    if stated is not None and stated != actual:
        raise ConfigurationError(
            f"manifest config_hash {stated} does not match contents ({actual})")
    return RunConfig(subcommand=doc["subcommand"], params=params,
                     out_dir=out_dir if out_dir is not None else str(Path(path).parent),
                     overwrite=overwrite)


def write_csv(path: Path, header: list[str], rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_h_series_csv(path: Path, series: HSeries):
    rows = zip(series.times, series.values, series.exclusion_fractions)
    write_csv(path, ["t", "h", "exclusion_rate"], rows)


def write_grid_csv(path: Path, grid: DensityGrid):
    vals = np.atleast_2d(grid.values)
    write_csv(path, [f"c{j}" for j in range(vals.shape[1])], vals)


def read_grid_csv(path: Path) -> np.ndarray:
    lines = Path(path).read_text().strip().split("\n")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return data[0] if data.shape[0] == 1 else data


def write_grid_pgm(path: Path, grid: DensityGrid):
    """16-bit binary PGM scaled to the grid maximum, which a comment records."""
    vals = np.atleast_2d(grid.values)
    peak = float(vals.max())
    if peak <= 0.0:
        scaled = np.zeros_like(vals, dtype=np.uint16)
    else:
        scaled = np.rint(vals / peak * 65535.0).astype(np.uint16)
    h, w = scaled.shape
    header = f"P5\n# max={fmt(peak)}\n{w} {h}\n65535\n"
    path.write_bytes(header.encode("ascii") + scaled.astype(">u2").tobytes())


def read_grid_pgm(path: Path):
    """Inverse of write_grid_pgm: returns (values, recorded max)."""
    blob = Path(path).read_bytes()
    fields, peak, pos = [], None, 0
    while len(fields) < 4:
        nl = blob.index(b"\n", pos)
        line = blob[pos:nl].decode("ascii")
        pos = nl + 1
        if line.startswith("#"):
            if line.startswith("# max="):
                peak = float(line[6:])
            continue
        fields.extend(line.split())
    magic, w, h, depth = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != "P5" or depth != 65535:
        raise ConfigurationError(f"not a 16-bit P5 image: {path}")
    raw = np.frombuffer(blob[pos:pos + 2 * w * h], dtype=">u2").reshape(h, w)
    if peak is None:
        raise ConfigurationError(f"image lacks the scale comment: {path}")
    return raw.astype(float) / 65535.0 * peak, peak


def _relax_files(out: Path, result: RelaxationResult):
    yield out / "h_series.csv", lambda p: write_h_series_csv(p, result.h_series)
    if result.fit is not None:
        fit_doc = {"rate": result.fit.rate, "amplitude": result.fit.amplitude,
                   "r_squared": result.fit.r_squared,
                   "fitted_times": list(result.fit.fitted_times),
                   "residuals": list(result.fit.residuals)}
        yield out / "h_fit.json", lambda p: p.write_text(
            json.dumps(fit_doc, indent=2, sort_keys=True) + "\n")
    for k, (rho, q) in enumerate(zip(result.rho_grids, result.q_grids)):
        yield out / f"density_t{k:02d}.csv", (lambda p, g=rho: write_grid_csv(p, g))
        yield out / f"density_t{k:02d}.pgm", (lambda p, g=rho: write_grid_pgm(p, g))
        yield out / f"born_t{k:02d}.csv", (lambda p, g=q: write_grid_csv(p, g))


def _signal_files(out: Path, result: SignallingResult):
    def stats_rows():
        for k, t in enumerate(result.times):
            if t <= result.params.t_op:
                verdict = "pre_op"
            elif result.tv[k] > result.thresholds[k]:
                verdict = "signal"
            else:
                verdict = "quiet"
            yield t, result.tv[k], result.thresholds[k], verdict
    yield out / "signal_stats.csv", lambda p: write_csv(
        p, ["t", "tv", "threshold", "verdict"], stats_rows())
    for k in range(len(result.times)):
        noop, op = result.marginals_noop[k], result.marginals_op[k]
        rows = zip(range(noop.cells), noop.values, op.values)
        yield out / f"marginals_t{k:02d}.csv", (
            lambda p, r=rows: write_csv(p, ["cell", "no_op", "op"], r))


def _freeze_files(out: Path, result: FreezingResult):
    rows = zip(result.values, result.residuals)
    yield out / "freezing.csv", lambda p: write_csv(
        p, ["sweep_value", "residual_ratio"], rows)


def result_files(out: Path, result):
    if isinstance(result, RelaxationResult):
        yield from _relax_files(out, result)
    elif isinstance(result, SignallingResult):
        yield from _signal_files(out, result)
    elif isinstance(result, FreezingResult):
        yield from _freeze_files(out, result)
    else:
        raise ConfigurationError(f"no writer for result type {type(result).__name__}")


def write_outputs(result, config: RunConfig, figures: bool = True) -> list[Path]:
    """Write the run's result directory; returns the files written.

    Refuses a non-empty target unless the overwrite flag is set.  On any
    failure every file written so far is removed, so a directory never
    holds a half-written run.
    """
    out = Path(config.out_dir)
    if out.exists() and any(out.iterdir()) and not config.overwrite:
        raise FileExistsError(
            f"output directory {out} is not empty; pass the overwrite flag to replace it")
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest = out / "manifest.json"
        write_manifest(manifest, config)
        written.append(manifest)
        for path, writer in result_files(out, result):
            writer(path)
            written.append(path)
        if figures:
            from .figures import render_figures
            written.extend(render_figures(result, out))
    except BaseException:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise
    return written
