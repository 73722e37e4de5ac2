"""Trajectory integration along the guidance velocity field.

The equation of motion dx/dt = Im(grad psi / psi) is integrated with an
adaptive embedded 5(4) Runge-Kutta pair.  Steps that would cross a wall or
land too close to a node of psi are rejected and retried at half the step;
a step that cannot shrink any further ends the trajectory with an abort
status instead of silently producing garbage.  Integration runs equally
well backward in time, which is how densities are reconstructed: the value
now at x is the initial density carried along the trajectory that arrives
at x.

For states with a wall event the time axis is split there and the two
sides use the pre- and post-event wavefunction respectively, so no step
ever straddles the discontinuity.

Ensemble-sized work is dispatched over a thread pool; the compiled kernels
drop the GIL and write results at per-trajectory indices, so the answer is
bitwise identical whatever the worker count (``SUBQUANTUM_THREADS``
overrides the default of one worker per CPU).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from . import _kernels as K
from .errors import ConfigurationError
from .states import EntangledState, ExpandingBoxState, ModeSuperposition

_STATUS_NAMES = {
    K.STATUS_COMPLETED: "completed",
    K.STATUS_NODE: "node_abort",
    K.STATUS_WALL: "wall_abort",
    K.STATUS_STEP_LIMIT: "step_limit",
}


@dataclass(frozen=True)
class IntegratorConfig:
    """Step-control settings for the adaptive integrator.

    ``node_density_floor`` is relative: a velocity evaluation counts as a
    node hit when |psi|^2 falls below this fraction of the spatial maximum
    of |psi|^2 at t=0 (estimated once per state on a 256-per-dimension
    grid), which keeps the threshold meaningful whatever the box size.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 1e-1
    node_density_floor: float = 1e-12
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0):
            raise ConfigurationError(f"rel_tol out of range: {self.rel_tol}")
        if not (0.0 < self.abs_tol < 1.0):
            raise ConfigurationError(f"abs_tol out of range: {self.abs_tol}")
        if not (0.0 < self.h_min <= self.h_init <= self.h_max):
            raise ConfigurationError("need 0 < h_min <= h_init <= h_max")
        if self.node_density_floor <= 0.0:
            raise ConfigurationError("node_density_floor must be positive")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")


@dataclass(frozen=True)
class TrajectoryPath:
    """Recorded trajectory: samples, status, and step accounting.

    ``status`` is one of completed, node_abort, wall_abort, step_limit.
    On abort the arrays hold the path up to the failure point.
    """

    times: NDArray[np.float64]
    positions: NDArray[np.float64]
    velocities: NDArray[np.float64]
    status: str
    accepted: int
    attempted: int

    @property
    def final_position(self) -> NDArray[np.float64]:
        return self.positions[-1]

    @property
    def points(self) -> list[tuple[float, NDArray[np.float64]]]:
        """Ordered (t, x) samples including both endpoints."""
        return [(float(t), p) for t, p in zip(self.times, self.positions)]

    @property
    def step_count(self) -> int:
        return self.accepted

    def at(self, t: float) -> NDArray[np.float64]:
        """Cubic Hermite interpolation between recorded samples."""
        ts = self.times
        lo, hi = (ts[0], ts[-1]) if ts[0] <= ts[-1] else (ts[-1], ts[0])
        if not (lo <= t <= hi):
            raise ConfigurationError(f"t={t} outside recorded range [{lo}, {hi}]")
        order = ts if ts[0] <= ts[-1] else ts[::-1]
        idx = int(np.searchsorted(order, t))
        idx = min(max(idx, 1), ts.shape[0] - 1)
        if ts[0] > ts[-1]:
            idx = ts.shape[0] - idx
            i0, i1 = idx, idx - 1
        else:
            i0, i1 = idx - 1, idx
        t0, t1 = ts[i0], ts[i1]
        if t1 == t0:
            return self.positions[i0].copy()
        s = (t - t0) / (t1 - t0)
        dt = t1 - t0
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.positions[i0] + h10 * dt * self.velocities[i0]
                + h01 * self.positions[i1] + h11 * dt * self.velocities[i1])


@dataclass(frozen=True)
class PackedState:
    """Flat kernel-ready form of a wavefunction state."""

    family: int
    dim: int
    La: float
    Lb: float
    scale: float
    t_op: float
    m_arr: NDArray[np.int64]
    n_arr: NDArray[np.int64]
    amp: NDArray[np.complex128]
    a_list: NDArray[np.int64]
    D: NDArray[np.complex128]
    max_idx: int
    max_esq: int
    pre_uniform: int


def pack_state(state) -> PackedState:
    """Lower a wavefunction object to the flat arrays the kernels consume."""
    dummy_a = np.zeros(1, dtype=np.int64)
    dummy_D = np.zeros((1, 1), dtype=np.complex128)
    if isinstance(state, ModeSuperposition):
        m = np.ascontiguousarray(state.modes[:, 0], dtype=np.int64)
        if state.dim == 2:
            n = np.ascontiguousarray(state.modes[:, 1], dtype=np.int64)
        else:
            n = np.zeros_like(m)
        esq = m * m + n * n
        return PackedState(K.FAMILY_STATIC, state.dim, state.geometry.side, 0.0,
                           state.velocity_scale, math.inf, m, n,
                           np.ascontiguousarray(state.amplitudes), dummy_a, dummy_D,
                           int(max(m.max(), n.max())), int(esq.max()), 0)
    if isinstance(state, EntangledState):
        a = np.ascontiguousarray(state.pair_modes[:, 0], dtype=np.int64)
        b = np.ascontiguousarray(state.pair_modes[:, 1], dtype=np.int64)
        if state._post is not None:
            a_list, D = state._post
            a_list = np.ascontiguousarray(a_list, dtype=np.int64)
            D = np.ascontiguousarray(D)
        else:
            a_list, D = dummy_a, dummy_D
        return PackedState(K.FAMILY_PAIR, 2, state.geometry_a.side,
                           state.geometry_b.side, 1.0, state.event_time,
                           a, b, np.ascontiguousarray(state.amplitudes),
                           a_list, D, 1, 1, int(state._pre_uniform))
    if isinstance(state, ExpandingBoxState):
        m = np.ascontiguousarray(state.modes[:, 0], dtype=np.int64)
        return PackedState(K.FAMILY_EXPANDING, 1, state.geometry.side, state.rate,
                           1.0, math.inf, m, np.zeros_like(m),
                           np.ascontiguousarray(state.amplitudes), dummy_a, dummy_D,
                           1, 1, 0)
    raise ConfigurationError(f"cannot integrate state of type {type(state).__name__}")


def build_schedule(state, t_from: float, capture_times):
    """Segment table from t_from through each capture time in travel order.

    Splits at the wall event so no segment straddles it, and tags each
    segment with the wavefunction side to use (the event instant itself
    belongs to the post side).  Returns (t0s, t1s, post_flags, capture_idx)
    where capture_idx[j] >= 0 marks the capture slot filled at the end of
    segment j.
    """
    caps = [float(t) for t in capture_times]
    if not caps:
        raise ConfigurationError("need at least one capture time")
    forward = caps[-1] >= t_from
    ordered = sorted(caps) if forward else sorted(caps, reverse=True)
    if ordered != caps:
        raise ConfigurationError("capture times must be sorted in travel order")
    for c in caps:
        if (forward and c < t_from) or ((not forward) and c > t_from):
            raise ConfigurationError("capture times must lie beyond t_from in travel order")
    t_op = getattr(state, "event_time", math.inf)
    has_event = math.isfinite(t_op)
    t0s, t1s, posts, cap_idx = [], [], [], []
    prev = t_from
    for slot, c in enumerate(caps):
        lo, hi = (prev, c) if forward else (c, prev)
        if has_event and lo < t_op < hi:
            mids = [prev, t_op, c]
        else:
            mids = [prev, c]
        for a, b in zip(mids[:-1], mids[1:]):
            t0s.append(a)
            t1s.append(b)
            mid = 0.5 * (a + b)
            posts.append(1 if (has_event and mid >= t_op) else 0)
            cap_idx.append(-1)
        cap_idx[-1] = slot
        prev = c
    return (np.asarray(t0s), np.asarray(t1s),
            np.asarray(posts, dtype=np.int64), np.asarray(cap_idx, dtype=np.int64))


def thread_count(requested: int | None = None) -> int:
    """Worker count: explicit argument, else SUBQUANTUM_THREADS, else CPUs.

    A requested value of 0 (or the env var set to 0) means hardware default.
    """
    if requested is not None:
        n = int(requested)
    else:
        env = os.environ.get("SUBQUANTUM_THREADS", "").strip()
        n = int(env) if env else 0
    if n == 0:
        n = os.cpu_count() or 1
    if n < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {n}")
    return n


def density_ceiling(state, resolution: int = 256) -> float:
    """Spatial maximum of |psi|^2 at t=0, estimated on a midpoint grid.

    Cached on the state; node thresholds are expressed relative to this.
    """
    cached = getattr(state, "_density_ceiling", None)
    if cached is not None:
        return cached
    sides = state.sides_at(0.0)
    axes = [(np.arange(resolution) + 0.5) * (side / resolution) for side in sides]
    if len(sides) == 1:
        pts = axes[0][:, None]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    peak = float(born_many(state, pts, 0.0, threads=1).max())
    if peak <= 0.0:
        raise ConfigurationError("state density vanishes on the estimation grid")
    state._density_ceiling = peak
    return peak


def _chunks(n: int, workers: int):
    size = (n + workers - 1) // workers
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def run_schedule(state, points, t_from: float, capture_times,
                 config: IntegratorConfig | None = None,
                 threads: int | None = None):
    """Evolve many configuration points through a shared capture schedule.

    Returns (captured, status, steps): captured has shape
    (n_captures, n_points, dim) with NaN where a trajectory aborted before
    that capture, status holds the per-trajectory status code, steps the
    attempted step count.
    """
    cfg = config or IntegratorConfig()
    p = pack_state(state)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != p.dim:
        raise ConfigurationError(f"points have width {pts.shape[1]}, state dim is {p.dim}")
    n = pts.shape[0]
    xs = np.ascontiguousarray(pts[:, 0])
    ys = np.ascontiguousarray(pts[:, 1]) if p.dim == 2 else np.zeros_like(xs)
    t0s, t1s, posts, cap_idx = build_schedule(state, t_from, capture_times)
    n_caps = int(cap_idx.max()) + 1
    out_pos = np.full((n_caps, n, p.dim), np.nan)
    out_status = np.zeros(n, dtype=np.int64)
    out_steps = np.zeros(n, dtype=np.int64)
    workers = thread_count(threads)
    floor = cfg.node_density_floor * density_ceiling(state)

    def run_range(i0, i1):
        K._run_segments_range(p.family, p.dim, p.pre_uniform, p.La, p.Lb, p.scale, p.t_op,
                              p.m_arr, p.n_arr, p.amp, p.a_list, p.D,
                              xs, ys, t0s, t1s, posts, cap_idx,
                              cfg.rel_tol, cfg.abs_tol, cfg.h_init, cfg.h_min,
                              cfg.h_max, floor, cfg.max_steps,
                              p.max_idx, p.max_esq, out_pos, out_status, out_steps,
                              i0, i1)

    if workers == 1 or n < 2 * workers:
        run_range(0, n)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_range, i0, i1) for i0, i1 in _chunks(n, workers)]
            for f in futures:
                f.result()
    return out_pos, out_status, out_steps


def backtrack_many(state, points, t: float, config: IntegratorConfig | None = None,
                   threads: int | None = None):
    """Integrate many points backward from time t to 0.

    Returns (origins, status): origins (n, dim) with NaN rows on abort.
    """
    captured, status, _ = run_schedule(state, points, t, [0.0], config, threads)
    return captured[0], status


def born_many(state, points, t: float, threads: int | None = None) -> NDArray[np.float64]:
    """|psi|^2 on an array of configuration points at one time."""
    p = pack_state(state)
    pts = np.atleast_2d(np.ascontiguousarray(points, dtype=np.float64))
    if pts.shape[1] != p.dim:
        raise ConfigurationError(f"points have width {pts.shape[1]}, state dim is {p.dim}")
    use_post = 1 if (math.isfinite(p.t_op) and t >= p.t_op) else 0
    out = np.empty(pts.shape[0])
    n = pts.shape[0]
    workers = thread_count(threads)

    def run_range(i0, i1):
        K._born_range(p.family, p.dim, use_post, p.La, p.Lb, p.scale, p.t_op,
                      p.m_arr, p.n_arr, p.amp, p.a_list, p.D, pts, t,
                      p.max_idx, p.max_esq, out, i0, i1)

    if workers == 1 or n < 4 * workers:
        run_range(0, n)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_range, i0, i1) for i0, i1 in _chunks(n, workers)]
            for f in futures:
                f.result()
    return out


def integrate(state, x0, t0: float, t1: float,
              config: IntegratorConfig | None = None,
              record_capacity: int = 8192) -> TrajectoryPath:
    """Integrate one trajectory from x0 at t0 to t1, recording the path.

    t1 == t0 returns the point unchanged with status completed.  t1 < t0
    integrates backward.  The recording is thinned, never truncated, when
    a path outgrows ``record_capacity``.
    """
    cfg = config or IntegratorConfig()
    p = pack_state(state)
    pt = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if pt.shape != (p.dim,):
        raise ConfigurationError(f"x0 shape {pt.shape} does not match state dim {p.dim}")
    for comp, side in zip(pt, state.sides_at(t0)):
        if not (0.0 < comp < side):
            raise ConfigurationError(f"x0 {tuple(pt)} outside the open box at t={t0}")
    t_op = p.t_op
    forward = t1 >= t0
    bounds = []
    if math.isfinite(t_op) and (min(t0, t1) < t_op < max(t0, t1)):
        bounds = [(t0, t_op), (t_op, t1)]
    else:
        bounds = [(t0, t1)]
    sx = np.empty(p.max_idx + 1)
    cx = np.empty(p.max_idx + 1)
    sy = np.empty(p.max_idx + 1)
    cy = np.empty(p.max_idx + 1)
    pw = np.empty(p.max_esq + 1, dtype=np.complex128)
    row_s = np.empty(p.a_list.shape[0], dtype=np.complex128)
    row_ds = np.empty(p.a_list.shape[0], dtype=np.complex128)
    cap = max(int(record_capacity), 16)
    all_t, all_x, all_y, all_vx, all_vy = [], [], [], [], []
    x, y = float(pt[0]), float(pt[1]) if p.dim == 2 else 0.0
    status = K.STATUS_COMPLETED
    accepted = 0
    attempted = 0
    floor = cfg.node_density_floor * density_ceiling(state)
    for a, b in bounds:
        mid = 0.5 * (a + b)
        use_post = 1 if (math.isfinite(t_op) and mid >= t_op) else 0
        if a == b and math.isfinite(t_op):
            use_post = 1 if a >= t_op else 0
        rec_t = np.empty(cap)
        rec_x = np.empty(cap)
        rec_y = np.empty(cap)
        rec_vx = np.empty(cap)
        rec_vy = np.empty(cap)
        st, x, y, _, acc, att, n_rec = K._integrate_core(
            p.family, p.dim, use_post, p.pre_uniform, p.La, p.Lb, p.scale, t_op,
            p.m_arr, p.n_arr, p.amp, p.a_list, p.D, x, y, a, b,
            cfg.rel_tol, cfg.abs_tol, cfg.h_init, cfg.h_min, cfg.h_max,
            floor, cfg.max_steps,
            sx, cx, sy, cy, pw, p.max_idx, p.max_esq, row_s, row_ds,
            rec_t, rec_x, rec_y, rec_vx, rec_vy)
        accepted += acc
        attempted += att
        skip = 1 if (all_t and n_rec > 0 and rec_t[0] == all_t[-1][-1]) else 0
        if n_rec > skip:
            all_t.append(rec_t[skip:n_rec].copy())
            all_x.append(rec_x[skip:n_rec].copy())
            all_y.append(rec_y[skip:n_rec].copy())
            all_vx.append(rec_vx[skip:n_rec].copy())
            all_vy.append(rec_vy[skip:n_rec].copy())
        if st != K.STATUS_COMPLETED:
            status = st
            break
    if not all_t:
        all_t = [np.array([t0])]
        all_x = [np.array([pt[0]])]
        all_y = [np.array([pt[1] if p.dim == 2 else 0.0])]
        all_vx = [np.array([0.0])]
        all_vy = [np.array([0.0])]
    ts = np.concatenate(all_t)
    if p.dim == 2:
        pos = np.stack([np.concatenate(all_x), np.concatenate(all_y)], axis=1)
        vel = np.stack([np.concatenate(all_vx), np.concatenate(all_vy)], axis=1)
    else:
        pos = np.concatenate(all_x)[:, None]
        vel = np.concatenate(all_vx)[:, None]
    return TrajectoryPath(times=ts, positions=pos, velocities=vel,
                          status=_STATUS_NAMES[status], accepted=accepted,
                          attempted=attempted)


def backtrack(state, x, t: float, config: IntegratorConfig | None = None) -> NDArray[np.float64]:
    """Initial configuration whose trajectory arrives at x at time t.

    Raises if the backward integration aborts; density pipelines that
    tolerate aborts use ``backtrack_many`` and inspect statuses instead.
    """
    path = integrate(state, x, t, 0.0, config, record_capacity=16)
    if path.status != "completed":
        raise ConfigurationError(f"backtrack from {x} at t={t} aborted: {path.status}")
    return path.final_position
