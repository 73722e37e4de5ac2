"""Ensembles, coarse-grained densities, and the relaxation H-function.

An ensemble here is a cloud of configuration points distributed according
to some initial density rho_0, which need not be |psi|^2: equilibrium
(Born-rule) ensembles are one choice among several.  Two reconstructions
of the later density are provided.  The histogram pipeline bins forward
samples.  The backtracked pipeline is deterministic: since the guidance
flow transports f = rho/|psi|^2 along trajectories, the density now is

    rho(x, t) = |psi(x, t)|^2 * f0(x0(x, t)),    f0 = rho_0 / |psi(., 0)|^2,

with x0 the backward-integrated origin of x.  Cell values average an
s-per-axis midpoint quadrature inside each cell.

Departure from equilibrium is scored by the coarse-grained H-function

    H = sum_cells rho_bar ln(rho_bar / q_bar) * cellArea,

where q_bar is |psi|^2 put through the same cell quadrature so that the
discretization errors largely cancel.  H >= 0 with equality only at
cellwise equilibrium, and it has no reason to decrease at the fine-grained
level: the decay measured in the relaxation experiment is a coarse-grained
statement, which is why the cell size is an explicit parameter carried in
every result rather than a hidden constant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, ExclusionBudgetError, SamplingOverflowError
from .states import BoxGeometry, ModeSuperposition, _as_mode_array
from .trajectories import (IntegratorConfig, backtrack_many, born_many,
                           density_ceiling, thread_count)

DEFAULT_CELLS = {1: 64, 2: 32}
DEFAULT_SUBSAMPLES = 3
NORM_QUAD_TOL = 1e-8
EXCLUSION_BUDGET = 0.01


def _gauss_points(side: float, n: int):
    u, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * side * (u + 1.0), 0.5 * side * w


class DensitySpec:
    """A normalized initial density over a box; base of the variant classes.

    Subclasses implement ``pdf`` (vectorized, defined inside the open box)
    and ``quadrature_norm``; construction verifies normalization to 1e-8.
    """

    sides: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def geometry(self) -> BoxGeometry:
        if self.dim == 2 and self.sides[0] != self.sides[1]:
            raise ConfigurationError("density lives on a non-square box; no single geometry")
        return BoxGeometry(self.dim, self.sides[0])

    def pdf(self, points) -> NDArray[np.float64]:
        raise NotImplementedError

    def quadrature_norm(self) -> float:
        """Integral of pdf over the box by Gauss-Legendre quadrature."""
        n = 96
        xs, wx = _gauss_points(self.sides[0], n)
        if self.dim == 1:
            return float(np.sum(self.pdf(xs[:, None]) * wx))
        ys, wy = _gauss_points(self.sides[1], n)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        vals = self.pdf(np.column_stack([gx.ravel(), gy.ravel()])).reshape(n, n)
        return float(wx @ vals @ wy)

    def _check_normalized(self):
        total = self.quadrature_norm()
        if abs(total - 1.0) > NORM_QUAD_TOL:
            raise ConfigurationError(
                f"{type(self).__name__} integrates to {total!r}, expected 1 within {NORM_QUAD_TOL}")

    def envelope_bound(self, resolution: int = 512) -> float:
        """Inflated upper bound on pdf from a midpoint grid scan."""
        cached = getattr(self, "_envelope", None)
        if cached is not None:
            return cached
        axes = [(np.arange(resolution) + 0.5) * (s / resolution) for s in self.sides]
        if self.dim == 1:
            pts = axes[0][:, None]
        else:
            gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
            pts = np.column_stack([gx.ravel(), gy.ravel()])
        bound = 1.1 * float(self.pdf(pts).max())
        if not (bound > 0.0 and math.isfinite(bound)):
            raise ConfigurationError(f"degenerate envelope bound {bound}")
        self._envelope = bound
        return bound


class BornOf(DensitySpec):
    """rho_0 = |psi(., 0)|^2 of a given state: the equilibrium density."""

    def __init__(self, state):
        self.state = state
        self.sides = tuple(state.sides_at(0.0))
        self._check_normalized()

    def pdf(self, points) -> NDArray[np.float64]:
        return born_many(self.state, np.asarray(points, dtype=float), 0.0, threads=1)


class SingleModeBorn(DensitySpec):
    """|phi_mode|^2 of one box eigenmode: smooth, node-free inside the box.

    In 2D this factorizes over the axes, so with mode (m, n) it also serves
    as the product of two independent 1D mode densities.
    """

    def __init__(self, mode, geometry: BoxGeometry | None = None,
                 sides: tuple[float, ...] | None = None):
        if sides is not None:
            self.sides = tuple(float(s) for s in sides)
        else:
            geometry = geometry if geometry is not None else BoxGeometry(2)
            self.sides = (geometry.side,) * geometry.dim
        self.mode = _as_mode_array([mode], len(self.sides))[0]
        self._check_normalized()

    def pdf(self, points) -> NDArray[np.float64]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.ones(pts.shape[0])
        for axis, (m, side) in enumerate(zip(self.mode, self.sides)):
            out *= (2.0 / side) * np.sin(m * math.pi * pts[:, axis] / side) ** 2
        return out


class UniformOnBox(DensitySpec):
    """Flat density over the box."""

    def __init__(self, geometry: BoxGeometry | None = None):
        geometry = geometry if geometry is not None else BoxGeometry(2)
        self.sides = (geometry.side,) * geometry.dim
        self._check_normalized()

    def pdf(self, points) -> NDArray[np.float64]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.full(pts.shape[0], 1.0 / math.prod(self.sides))


class GridTabulated(DensitySpec):
    """Piecewise-constant density from values on a uniform cell grid.

    Values are renormalized at construction; the normalization check uses
    the exact cell sum since Gauss points straddle the discontinuities.
    """

    def __init__(self, values, geometry: BoxGeometry):
        vals = np.asarray(values, dtype=float)
        self.sides = (geometry.side,) * geometry.dim
        if vals.ndim != geometry.dim:
            raise ConfigurationError(f"values ndim {vals.ndim} != box dim {geometry.dim}")
        if geometry.dim == 2 and vals.shape[0] != vals.shape[1]:
            raise ConfigurationError("tabulated grid must be square in 2D")
        if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
            raise ConfigurationError("tabulated values must be finite and nonnegative")
        self.cells = vals.shape[0]
        cell_vol = math.prod(self.sides) / vals.size
        total = float(vals.sum() * cell_vol)
        if total <= 0.0:
            raise ConfigurationError("tabulated density sums to zero")
        self.values = vals / total
        self._check_normalized()

    def quadrature_norm(self) -> float:
        cell_vol = math.prod(self.sides) / self.values.size
        return float(self.values.sum() * cell_vol)

    def pdf(self, points) -> NDArray[np.float64]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = []
        for axis, side in enumerate(self.sides):
            i = np.floor(pts[:, axis] * self.cells / side).astype(int)
            idx.append(np.clip(i, 0, self.cells - 1))
        return self.values[tuple(idx)]


@dataclass(frozen=True)
class DensityGrid:
    """Coarse-grained density: per-cell averages on a uniform square grid.

    ``provenance`` records how the values were produced (histogram,
    backtracked, quadrature, tabulated); ``meta`` carries the associated
    accounting such as sample counts, subsamples per cell, exclusion
    fraction and pre-renormalization deficit.
    """

    geometry: BoxGeometry
    cells: int
    values: NDArray[np.float64]
    provenance: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.cells,) if self.geometry.dim == 1 else (self.cells, self.cells)
        if self.values.shape != expected:
            raise ConfigurationError(f"grid shape {self.values.shape}, expected {expected}")
        if np.any(self.values < 0.0) or not np.all(np.isfinite(self.values)):
            raise ConfigurationError("grid values must be finite and nonnegative")
        total = self.total_mass
        if abs(total - 1.0) > 1e-6:
            raise ConfigurationError(f"grid integrates to {total!r}, expected 1 within 1e-6")

    @property
    def cell_volume(self) -> float:
        return (self.geometry.side / self.cells) ** self.geometry.dim

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)


def _require_matching(a: DensityGrid, b: DensityGrid):
    if a.cells != b.cells or a.geometry.dim != b.geometry.dim:
        raise ConfigurationError(f"grid resolution mismatch: {a.cells}^{a.geometry.dim} "
                                 f"vs {b.cells}^{b.geometry.dim}")
    if not math.isclose(a.geometry.side, b.geometry.side, rel_tol=1e-12):
        raise ConfigurationError(f"grid geometry mismatch: sides {a.geometry.side} vs {b.geometry.side}")


def h_function(rho: DensityGrid, q: DensityGrid) -> float:
    """Coarse-grained H = sum rho_bar ln(rho_bar/q_bar) cellArea, with 0 ln 0 = 0.

    q_bar is clamped to 1e-300 (with a warning) on cells where rho_bar > 0
    but q_bar = 0; by the Gibbs inequality the result is >= 0 up to roundoff
    for any pair of normalized grids.
    """
    _require_matching(rho, q)
    r = rho.values.ravel()
    s = q.values.ravel()
    active = r > 0.0
    if np.any(s[active] <= 0.0):
        warnings.warn("q grid vanishes on cells with mass; clamping to 1e-300", stacklevel=2)
        s = np.where(active & (s <= 0.0), 1e-300, s)
    terms = np.zeros_like(r)
    terms[active] = r[active] * np.log(r[active] / s[active])
    return float(terms.sum() * rho.cell_volume)


def tv_distance(a: DensityGrid, b: DensityGrid) -> float:
    """Total variation distance (1/2) sum |a_bar - b_bar| cellArea, in [0, 1]."""
    _require_matching(a, b)
    return float(0.5 * np.abs(a.values - b.values).sum() * a.cell_volume)


@dataclass(frozen=True)
class HSeries:
    """H-function values along snapshot times with their accounting.

    ``error_estimates`` are quadrature half-sample spreads per snapshot;
    ``exclusion_fractions`` the dropped-trajectory fraction per snapshot.
    The coarse-graining that every value depends on is carried alongside.
    """

    times: NDArray[np.float64]
    values: NDArray[np.float64]
    cells: int
    subsamples: int
    exclusion_fractions: NDArray[np.float64]
    error_estimates: NDArray[np.float64]
    deficits: NDArray[np.float64]

    def __post_init__(self):
        n = self.times.shape[0]
        for name in ("values", "exclusion_fractions", "error_estimates", "deficits"):
            if getattr(self, name).shape != (n,):
                raise ConfigurationError(f"HSeries field {name} length mismatch")
        if np.any(self.values < -1e-10):
            raise ConfigurationError(f"negative H value in series: {self.values.min()}")


def rejection_sample(spec: DensitySpec, n: int, seed: int) -> NDArray[np.float64]:
    """Draw n i.i.d. points from a density spec, reproducibly.

    Sample i consumes its own counter-based substream (keyed by the seed,
    counter offset i), so the result is independent of batching, ordering
    and worker count.  Proposals are uniform over the box against an
    envelope bound scanned on a 512-per-dimension grid and inflated 1.1x;
    any density value above the bound aborts the run, since it means the
    scan missed a peak.
    """
    if n < 1:
        raise ConfigurationError(f"sample count must be >= 1, got {n}")
    if not (0 <= int(seed) < 2**64):
        raise ConfigurationError("seed must fit in 64 bits")
    bound = spec.envelope_bound()
    dim = spec.dim
    sides = np.asarray(spec.sides)
    out = np.empty((n, dim))
    block = 8192
    for start in range(0, n, block):
        stop = min(start + block, n)
        gens = [np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, i]))
                for i in range(start, stop)]
        pending = np.arange(stop - start)
        while pending.size:
            draws = np.stack([gens[j].random(dim + 1) for j in pending])
            pts = draws[:, :dim] * sides
            vals = spec.pdf(pts)
            if np.any(vals > bound):
                raise SamplingOverflowError(
                    f"density value {vals.max():.6g} exceeds envelope bound {bound:.6g}")
            accept = draws[:, dim] * bound < vals
            rows = pending[accept]
            out[start + rows] = pts[accept]
            pending = pending[~accept]
    return out


def _subsample_points(side: float, dim: int, cells: int, sub: int) -> NDArray[np.float64]:
    """Cell-major midpoint lattice: sub^dim points per cell, cells^dim cells."""
    delta = side / cells
    offs = (np.arange(sub) + 0.5) * (delta / sub)
    axis = np.add.outer(np.arange(cells) * delta, offs)
    if dim == 1:
        return axis.reshape(-1, 1)
    px = axis[:, None, :, None]
    py = axis[None, :, None, :]
    pts = np.empty((cells, cells, sub, sub, 2))
    pts[..., 0] = px
    pts[..., 1] = py
    return pts.reshape(-1, 2)


def _assemble_grid(weights, included, geometry: BoxGeometry, cells: int, sub: int,
                   provenance: str, meta: dict, point_subset=None) -> DensityGrid:
    """Average per-cell quadrature weights into a normalized DensityGrid.

    ``point_subset`` restricts to a mask over the sub^dim points of every
    cell (used for half-sample error estimates).
    """
    npc = sub ** geometry.dim
    w = weights.reshape(-1, npc)
    inc = included.reshape(-1, npc)
    if point_subset is not None:
        inc = inc & point_subset[None, :]
    counts = inc.sum(axis=1)
    sums = np.where(inc, w, 0.0).sum(axis=1)
    vals = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    shape = (cells,) if geometry.dim == 1 else (cells, cells)
    vals = vals.reshape(shape)
    cell_vol = (geometry.side / cells) ** geometry.dim
    total = float(vals.sum() * cell_vol)
    if total <= 0.0:
        raise ConfigurationError("reconstructed density has no mass")
    out_meta = dict(meta)
    out_meta["deficit"] = 1.0 - total
    out_meta["empty_cells"] = int(np.count_nonzero(counts == 0))
    return DensityGrid(geometry, cells, vals / total, provenance, out_meta)


def backtracked_weights(f0: DensitySpec, state, t: float, cells: int, sub: int,
                        config: IntegratorConfig | None = None,
                        threads: int | None = None):
    """Per-quadrature-point transported density values and inclusion mask.

    Returns (geometry at t, weights, included): weights[p] is
    |psi(x_p, t)|^2 f0(x0(x_p)) for each midpoint-lattice point x_p, and
    included[p] is False where the backtrack aborted or the origin sits on
    a node of psi(., 0).
    """
    cfg = config or IntegratorConfig()
    sides = state.sides_at(t)
    if len(sides) == 2 and sides[0] != sides[1]:
        raise ConfigurationError("coarse grids need a square box")
    geometry = BoxGeometry(len(sides), sides[0])
    pts = _subsample_points(geometry.side, geometry.dim, cells, sub)
    origins, status = backtrack_many(state, pts, t, cfg, threads)
    included = status == 0
    weights = np.zeros(pts.shape[0])
    if np.any(included):
        floor = cfg.node_density_floor * density_ceiling(state)
        born0 = born_many(state, origins[included], 0.0, threads)
        ok0 = born0 > floor
        f_vals = np.zeros_like(born0)
        f_vals[ok0] = f0.pdf(origins[included][ok0]) / born0[ok0]
        born_t = born_many(state, pts[included], t, threads)
        weights[included] = born_t * f_vals
        keep = included.copy()
        keep[included] = ok0
        included = keep
    return geometry, weights, included


def coarse_density_backtracked(f0: DensitySpec, state, t: float,
                               cells: int | None = None, subsamples: int | None = None,
                               config: IntegratorConfig | None = None,
                               threads: int | None = None,
                               exclusion_budget: float = EXCLUSION_BUDGET) -> DensityGrid:
    """Deterministic coarse density at time t by trajectory backtracking.

    Excluded points (integrator aborts, origins on nodes) are dropped from
    their cell averages; the grid is renormalized and both the exclusion
    fraction and the pre-renormalization deficit are recorded.  Exceeding
    ``exclusion_budget`` aborts rather than returning a biased grid.
    """
    dim = len(state.sides_at(t))
    cells = DEFAULT_CELLS[dim] if cells is None else int(cells)
    sub = DEFAULT_SUBSAMPLES if subsamples is None else int(subsamples)
    if cells < 2 or sub < 1:
        raise ConfigurationError(f"need cells >= 2 and subsamples >= 1, got {cells}, {sub}")
    geometry, weights, included = backtracked_weights(f0, state, t, cells, sub,
                                                      config, threads)
    excluded = 1.0 - included.mean()
    if excluded > exclusion_budget:
        raise ExclusionBudgetError(
            f"{excluded:.2%} of quadrature points excluded at t={t}, budget {exclusion_budget:.2%}")
    meta = {"t": t, "subsamples": sub, "exclusion_fraction": float(excluded)}
    return _assemble_grid(weights, included, geometry, cells, sub, "backtracked", meta)


def coarse_born_grid(state, t: float, cells: int | None = None,
                     subsamples: int | None = None,
                     threads: int | None = None) -> DensityGrid:
    """|psi(., t)|^2 pushed through the same cell quadrature as backtracking.

    Using identical quadrature for rho_bar and q_bar makes their shared
    discretization error cancel at first order inside the H-function.
    """
    sides = state.sides_at(t)
    dim = len(sides)
    if dim == 2 and sides[0] != sides[1]:
        raise ConfigurationError("coarse grids need a square box")
    cells = DEFAULT_CELLS[dim] if cells is None else int(cells)
    sub = DEFAULT_SUBSAMPLES if subsamples is None else int(subsamples)
    geometry = BoxGeometry(dim, sides[0])
    pts = _subsample_points(geometry.side, dim, cells, sub)
    weights = born_many(state, pts, t, threads)
    included = np.ones(pts.shape[0], dtype=bool)
    meta = {"t": t, "subsamples": sub, "exclusion_fraction": 0.0}
    return _assemble_grid(weights, included, geometry, cells, sub, "quadrature", meta)


def coarse_density_histogram(positions, geometry: BoxGeometry,
                             cells: int | None = None) -> DensityGrid:
    """Count-normalized density grid from forward samples."""
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    if pts.shape[1] != geometry.dim:
        raise ConfigurationError(f"positions width {pts.shape[1]} != box dim {geometry.dim}")
    if pts.shape[0] < 1:
        raise ConfigurationError("need at least one position")
    cells = DEFAULT_CELLS[geometry.dim] if cells is None else int(cells)
    edges = [np.linspace(0.0, geometry.side, cells + 1)] * geometry.dim
    counts, _ = np.histogramdd(pts, bins=edges)
    n = pts.shape[0]
    cell_vol = (geometry.side / cells) ** geometry.dim
    kept = counts.sum()
    if kept < n:
        warnings.warn(f"{int(n - kept)} positions outside the box dropped from histogram",
                      stacklevel=2)
    if kept == 0:
        raise ConfigurationError("no positions inside the box")
    vals = counts / (kept * cell_vol)
    if geometry.dim == 1:
        vals = vals.ravel()
    return DensityGrid(geometry, cells, vals, "histogram",
                       {"n_samples": int(kept), "n_dropped": int(n - kept)})
