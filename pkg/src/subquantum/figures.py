"""Figure rendering for run reports.

Every experiment gets a small set of PNGs next to its CSV output: the
H-function decay with its fit, density heatmaps, the TV series against
its null threshold, the freezing sweep.  Rendering is headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import FreezingResult, RelaxationResult, SignallingResult

DPI = 130


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def _grid_panel(ax, grid, title):
    side = grid.geometry.side
    if grid.geometry.dim == 1:
        centers = (np.arange(grid.cells) + 0.5) * side / grid.cells
        ax.plot(centers, grid.values, lw=1.2)
        ax.set_xlabel("x")
    else:
        ax.imshow(grid.values.T, origin="lower", extent=(0, side, 0, side),
                  cmap="inferno", aspect="equal")
    ax.set_title(title, fontsize=9)


def _relax_figures(result: RelaxationResult, out: Path):
    s = result.h_series
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(s.times, s.values, yerr=s.error_estimates, fmt="o-", ms=3,
                lw=1, capsize=2, label="coarse-grained H")
    if result.fit is not None and len(s.times):
        tt = np.linspace(s.times[0], s.times[-1], 200)
        ax.plot(tt, result.fit.amplitude * np.exp(-result.fit.rate * tt), "--",
                lw=1, label=f"fit: rate {result.fit.rate:.3f}")
    positive = s.values[s.values > 0]
    if positive.size and positive.min() / max(positive.max(), 1e-300) < 0.2:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("H")
    ax.legend(fontsize=8)
    yield _save(fig, out / "h_series.png")
    if result.rho_grids:
        idx = sorted({0, len(result.rho_grids) // 2, len(result.rho_grids) - 1})
        n = len(idx) + 1
        fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2))
        for ax, k in zip(axes, idx):
            _grid_panel(ax, result.rho_grids[k], f"density t={s.times[k]:.2f}")
        _grid_panel(axes[-1], result.q_grids[-1], f"|psi|^2 t={s.times[-1]:.2f}")
        yield _save(fig, out / "densities.png")


def _signal_figures(result: SignallingResult, out: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(result.times, result.tv, "o-", ms=4, lw=1.2, label="TV(op, no-op)")
    ax.plot(result.times, result.thresholds, "s--", ms=3, lw=1,
            label="null mean + 5 sd")
    ax.axvline(result.params.t_op, color="k", lw=0.8, ls=":", label="wall move")
    ax.set_xlabel("t")
    ax.set_ylabel("total variation")
    ax.set_title(f"verdict: {result.verdict}", fontsize=10)
    ax.legend(fontsize=8)
    yield _save(fig, out / "signal_stats.png")
    k = len(result.times) - 1
    noop, op = result.marginals_noop[k], result.marginals_op[k]
    centers = (np.arange(noop.cells) + 0.5) * noop.geometry.side / noop.cells
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(centers, noop.values, where="mid", lw=1.2, label="no operation")
    ax.step(centers, op.values, where="mid", lw=1.2, label="wall moved")
    ax.set_xlabel("x (first particle)")
    ax.set_ylabel("marginal density")
    ax.set_title(f"t = {result.times[k]:.2f}", fontsize=10)
    ax.legend(fontsize=8)
    yield _save(fig, out / "marginals.png")


def _freeze_figures(result: FreezingResult, out: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(result.values, result.residuals, "o-", lw=1.2)
    if result.params.variant == "velocity" and all(v > 0 for v in result.values):
        ax.set_xscale("log", base=2)
        ax.set_xlabel("velocity scale")
    else:
        ax.set_xlabel("expansion rate")
    ax.set_ylabel("H(T) / H(0)")
    ax.set_ylim(0, max(1.05, float(result.residuals.max()) * 1.05))
    yield _save(fig, out / "freezing.png")


def render_figures(result, out: Path) -> list[Path]:
    out = Path(out)
    if isinstance(result, RelaxationResult):
        return list(_relax_figures(result, out))
    if isinstance(result, SignallingResult):
        return list(_signal_figures(result, out))
    if isinstance(result, FreezingResult):
        return list(_freeze_figures(result, out))
    return []
