"""Command-line entry point: relax, signal and freeze subcommands.

Parameters come from dataclass defaults, overlaid by an optional JSON
config file (``--config``; a saved manifest works as-is), overlaid by
individual flags.  Exit codes: 0 success, 2 usage or configuration
error, 3 numerical abort, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import NamedTuple

from .errors import ConfigurationError, NumericalAbortError
from .experiments import run_freezing, run_relaxation, run_signalling
from .reporting import RunConfig, params_from_dict, write_outputs

RUNNERS = {"relax": run_relaxation, "signal": run_signalling, "freeze": run_freezing}


class RunOptions(NamedTuple):
    threads: int | None
    figures: bool


def _comma_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _comma_pairs(text: str) -> tuple[tuple[int, int], ...]:
    try:
        return tuple(tuple(int(m) for m in part.split(":")) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected pairs like 1:2,2:1, got {text!r}")


def _modes_spec(text: str) -> tuple[int, int]:
    """'4x4' is the 2D grid up to mode 4; a bare '8' is 1D up to mode 8."""
    try:
        if "x" in text:
            a, b = text.split("x")
            if int(a) != int(b):
                raise argparse.ArgumentTypeError(
                    f"mode grid must be square, got {text!r}")
            return int(a), 2
        return int(text), 1
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MxM or M, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subquantum",
        description="Pilot-wave box dynamics: relaxation, signalling, freezing runs.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", metavar="FILE",
                       help="JSON parameter file; a saved manifest.json works here")
        p.add_argument("--seed", type=int, dest="seed")
        p.add_argument("--out", help="output directory (default runs/<subcommand>)")
        p.add_argument("--overwrite", action="store_true",
                       help="replace an existing non-empty output directory")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering, write only delimited output")
        p.add_argument("--threads", type=int,
                       help="worker threads (0 = hardware; results do not depend on this)")

    relax = sub.add_parser("relax", help="coarse-grained H-function decay run")
    common(relax)
    relax.add_argument("--cells", type=int, dest="cells")
    relax.add_argument("--modes", type=_modes_spec, dest="modes",
                       help="mode cutoff: MxM for 2D, M for 1D")
    relax.add_argument("--density", choices=["born", "ground", "uniform"], dest="density")
    relax.add_argument("--snapshots", type=_comma_floats, dest="snapshot_times",
                       metavar="T1,T2,...")
    relax.add_argument("--subsamples", type=int, dest="subsamples")

    signal = sub.add_parser("signal", help="entangled-pair wall-move run")
    common(signal)
    signal.add_argument("--N", type=int, dest="n_samples")
    signal.add_argument("--t-op", type=float, dest="t_op")
    signal.add_argument("--pairs", type=_comma_pairs, dest="pairs", metavar="A:B,A:B")
    signal.add_argument("--truncation", type=int, dest="truncation")
    signal.add_argument("--density", choices=["born", "product"], dest="density")
    signal.add_argument("--times", type=_comma_floats, dest="times", metavar="T1,T2,...")
    signal.add_argument("--null-pairs", type=int, dest="null_pairs")
    signal.add_argument("--marginal-cells", type=int, dest="marginal_cells")

    freeze = sub.add_parser("freeze", help="suppressed-relaxation sweep")
    common(freeze)
    freeze.add_argument("--cells", type=int, dest="cells")
    freeze.add_argument("--sweep", choices=["velocity", "expansion"], dest="variant")
    freeze.add_argument("--values", type=_comma_floats, dest="values", metavar="V1,V2,...")
    freeze.add_argument("--modes", type=_modes_spec, dest="modes")
    freeze.add_argument("--density", choices=["born", "ground", "uniform"], dest="density")
    freeze.add_argument("--final-time", type=float, dest="final_time")
    freeze.add_argument("--subsamples", type=int, dest="subsamples")
    freeze.add_argument("--N", type=int, dest="n_samples")

    return parser


_RUN_KEYS = {"config", "out", "overwrite", "no_figures", "threads", "subcommand", "modes"}


def _load_config_file(path: str, subcommand: str) -> dict:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read --config file: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"--config file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigurationError(f"--config file {path} must hold a JSON object")
    if "params" in doc:
        stated = doc.get("subcommand")
        if stated is not None and stated != subcommand:
            raise ConfigurationError(
                f"--config file is for subcommand {stated!r}, not {subcommand!r}")
        doc = doc["params"]
    return dict(doc)


def _parse(argv) -> tuple[RunConfig, RunOptions]:
    ns = build_parser().parse_args(argv)
    merged = {}
    if ns.config:
        merged.update(_load_config_file(ns.config, ns.subcommand))
    for key, value in vars(ns).items():
        if key in _RUN_KEYS or value is None or value is False:
            continue
        merged[key] = value
    modes = getattr(ns, "modes", None)
    if modes is not None:
        merged["mode_max"], merged["dim"] = modes
    params = params_from_dict(ns.subcommand, merged)
    out_dir = ns.out if ns.out else f"runs/{ns.subcommand}"
    config = RunConfig(subcommand=ns.subcommand, params=params, out_dir=out_dir,
                       overwrite=bool(ns.overwrite))
    return config, RunOptions(threads=ns.threads, figures=not ns.no_figures)


def parse_cli(argv) -> RunConfig:
    """Parse arguments into a validated run configuration."""
    config, _ = _parse(argv)
    config.validate()
    return config


def _summary(result) -> str:
    name = type(result).__name__
    if name == "RelaxationResult":
        v = result.h_series.values
        if v.size == 0:
            return "relax: empty snapshot schedule"
        return f"relax: H {v[0]:.4f} -> {v[-1]:.4f} over {v.size} snapshots"
    if name == "SignallingResult":
        return (f"signal: verdict {result.verdict}, max TV {result.tv.max():.4f}, "
                f"max threshold {result.thresholds.max():.4f}")
    ratios = ", ".join(f"{v:g}:{r:.3f}" for v, r in zip(result.values, result.residuals))
    return f"freeze[{result.params.variant}]: residuals {ratios}, monotone={result.monotone}"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config, opts = _parse(argv)
        config.validate()
    except ConfigurationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        result = RUNNERS[config.subcommand](config.params, threads=opts.threads)
        written = write_outputs(result, config, figures=opts.figures)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbortError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    print(_summary(result))
    print(f"wrote {len(written)} files to {config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
