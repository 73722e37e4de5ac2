"""Wavefunctions for particles guided inside hard-walled boxes.

Units are hbar = 1 and unit mass throughout, so the free Hamiltonian is
-(1/2) d^2/dx^2 per degree of freedom.  Three families of configuration-space
wavefunctions are provided:

* ``ModeSuperposition`` -- a finite superposition of energy eigenmodes of a
  static box in one or two dimensions.  A two-dimensional box of side L has
  modes phi_mn(x, y) = (2/L) sin(m pi x / L) sin(n pi y / L) with energies
  E_mn = (pi/L)^2 (m^2 + n^2) / 2.

* ``EntangledState`` -- two particles in separate one-dimensional boxes with
  an entangled (non-product) amplitude matrix.  At ``event_time`` the second
  box suddenly doubles in width and the state is re-expanded in the modes of
  the widened box.

* ``ExpandingBoxState`` -- one particle in a one-dimensional box whose right
  wall recedes at constant speed.  For a uniformly moving wall the modes

      Phi_n(x, t) = sqrt(2/L(t)) sin(n pi x / L(t))
                    * exp(i [v x^2 / (2 L(t)) - (n^2 pi^2 / 2) tau(t)])

  with L(t) = L0 + v t and tau(t) = t / (L0 L(t)) solve the time-dependent
  Schroedinger equation exactly, so superpositions of them evolve without any
  grid or spectral approximation.

The velocity law for every family is v = Im(grad psi / psi) evaluated at the
actual configuration, which makes |psi|^2 an equivariant density: an ensemble
distributed as |psi|^2 stays so for all time, while other distributions are
carried into (or out of) it by the same flow.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, NodeError, TruncationError

DEFAULT_SIDE = math.pi


@dataclass(frozen=True)
class BoxGeometry:
    """A hard-walled box: the interval (0, L) or the square (0, L)^2."""

    dim: int
    side: float = DEFAULT_SIDE

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"box dimension must be 1 or 2, got {self.dim}")
        if not (self.side > 0.0 and math.isfinite(self.side)):
            raise ConfigurationError(f"box side must be positive and finite, got {self.side}")

    @property
    def volume(self) -> float:
        return self.side**self.dim

    def contains(self, x) -> bool:
        """Strict interior test; walls themselves count as outside."""
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        if pt.shape != (self.dim,):
            raise ConfigurationError(f"point shape {pt.shape} does not match dim {self.dim}")
        return bool(np.all(pt > 0.0) and np.all(pt < self.side))


@dataclass(frozen=True)
class WaveEvaluation:
    """psi, its configuration-space gradient, and |psi|^2 at one point.

    ``guidance_scale`` records any overall velocity rescaling the state
    carries, so the velocity law downstream needs nothing but this object.
    ``uniform_phase`` marks evaluations whose phase is spatially constant
    (a lone eigenmode, or a degenerate superposition with all energies
    equal): the guidance velocity is then exactly zero, not merely small.
    """

    psi: complex
    grad: NDArray[np.complex128]
    density: float
    guidance_scale: float = 1.0
    uniform_phase: bool = False


def _check_amplitudes(amps: NDArray[np.complex128], what: str, tol: float = 1e-12) -> None:
    norm = float(np.sum(np.abs(amps) ** 2))
    if abs(norm - 1.0) > tol:
        raise ConfigurationError(f"{what} amplitudes have squared norm {norm!r}, expected 1 within {tol}")


def _as_mode_array(modes, dim: int) -> NDArray[np.int64]:
    """Validate mode labels: positive integers, (m, n) pairs in 2D, distinct."""
    arr = np.atleast_2d(np.asarray(modes, dtype=np.int64))
    if dim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] != dim or arr.shape[0] == 0:
        raise ConfigurationError(f"expected mode labels of width {dim}, got shape {arr.shape}")
    if np.any(arr < 1):
        raise ConfigurationError("mode numbers must be positive integers")
    seen = {tuple(row) for row in arr}
    if len(seen) != arr.shape[0]:
        raise ConfigurationError("duplicate mode labels in superposition")
    return arr


def mode_energy(mode, geometry: BoxGeometry, velocity_scale: float = 1.0) -> float:
    """Eigenenergy of one box mode, including any overall velocity scaling.

    With side L = pi the 2D energies are (m^2 + n^2)/2, so every Bohr
    frequency is a multiple of 1/2 and the wavefunction field is periodic
    with period 4 pi.
    """
    arr = _as_mode_array([mode], geometry.dim)[0]
    base = 0.5 * (math.pi / geometry.side) ** 2 * float(np.sum(arr.astype(float) ** 2))
    return velocity_scale * base


class ModeSuperposition:
    """Finite superposition of static-box eigenmodes in 1 or 2 dimensions.

    ``velocity_scale`` rescales the dynamics as a whole: both the mode
    energies and the guidance velocities are multiplied by s, which is the
    same as giving the particle a mass 1/s.  Trajectories then satisfy
    x_s(t) = x_1(s t) exactly, so s < 1 slows relaxation without changing
    the family of curves traced out.
    """

    def __init__(self, modes, amplitudes, geometry: BoxGeometry | None = None,
                 velocity_scale: float = 1.0):
        self.geometry = geometry if geometry is not None else BoxGeometry(2)
        self.modes = _as_mode_array(modes, self.geometry.dim)
        self.amplitudes = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if self.amplitudes.shape[0] != self.modes.shape[0]:
            raise ConfigurationError(
                f"{self.modes.shape[0]} modes but {self.amplitudes.shape[0]} amplitudes")
        if not (velocity_scale >= 0.0 and math.isfinite(velocity_scale)):
            raise ConfigurationError(f"velocity_scale must be finite and >= 0, got {velocity_scale}")
        self.velocity_scale = float(velocity_scale)
        _check_amplitudes(self.amplitudes, "superposition")

    @property
    def dim(self) -> int:
        return self.geometry.dim

    def energies(self) -> NDArray[np.float64]:
        sq = np.sum(self.modes.astype(float) ** 2, axis=1)
        return self.velocity_scale * 0.5 * (math.pi / self.geometry.side) ** 2 * sq

    def sides_at(self, t: float) -> tuple[float, ...]:
        return (self.geometry.side,) * self.dim

    def evaluate(self, x, t: float) -> WaveEvaluation:
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        L = self.geometry.side
        k = math.pi / L
        amp_norm = (2.0 / L) if self.dim == 2 else math.sqrt(2.0 / L)
        phases = np.exp(-1j * self.energies() * t)
        m = self.modes[:, 0].astype(float)
        sin_x = np.sin(m * k * pt[0])
        cos_x = np.cos(m * k * pt[0])
        if self.dim == 1:
            terms = self.amplitudes * phases * amp_norm
            psi = complex(np.sum(terms * sin_x))
            gx = complex(np.sum(terms * cos_x * (m * k)))
            grad = np.array([gx], dtype=np.complex128)
        else:
            n = self.modes[:, 1].astype(float)
            sin_y = np.sin(n * k * pt[1])
            cos_y = np.cos(n * k * pt[1])
            terms = self.amplitudes * phases * amp_norm
            psi = complex(np.sum(terms * sin_x * sin_y))
            gx = complex(np.sum(terms * cos_x * sin_y * (m * k)))
            gy = complex(np.sum(terms * sin_x * cos_y * (n * k)))
            grad = np.array([gx, gy], dtype=np.complex128)
        return WaveEvaluation(psi=psi, grad=grad, density=abs(psi) ** 2,
                              guidance_scale=self.velocity_scale,
                              uniform_phase=self.amplitudes.shape[0] == 1)


class ModeSuperposition2D(ModeSuperposition):
    """Two-dimensional ``ModeSuperposition`` with the square box enforced."""

    def __init__(self, modes, amplitudes, geometry: BoxGeometry | None = None,
                 velocity_scale: float = 1.0):
        geometry = geometry if geometry is not None else BoxGeometry(2)
        if geometry.dim != 2:
            raise ConfigurationError("ModeSuperposition2D requires a 2D box")
        super().__init__(modes, amplitudes, geometry, velocity_scale)


def wall_expansion_coefficients(n: int, count: int, side: float = DEFAULT_SIDE) -> NDArray[np.complex128]:
    """Overlaps of old box mode n with the first ``count`` modes of the doubled box.

    When the wall of a box of width L jumps instantly to 2L the wavefunction
    is unchanged at that moment, so mode n of the narrow box re-expands over
    the wide-box modes with coefficients

        d_k = integral_0^L sqrt(2/L) sin(n pi x / L) sqrt(1/L) sin(k pi x / (2L)) dx.

    Evaluating the integral: d_{2n} = 1/sqrt(2) always, even k != 2n vanish
    by symmetry, and odd k carry the slowly decaying tail
    d_k = -(-1)^n sin(k pi / 2) (sqrt(2)/pi) 4n / (4 n^2 - k^2).  The squared
    coefficients sum to 1 - O(1/count^3).
    """
    if n < 1 or count < 1:
        raise ConfigurationError("mode number and coefficient count must be >= 1")
    if side <= 0.0:
        raise ConfigurationError("box side must be positive")
    out = np.zeros(count, dtype=np.complex128)
    for j in range(1, count + 1):
        if j == 2 * n:
            out[j - 1] = 1.0 / math.sqrt(2.0)
        elif j % 2 == 1:
            sign = -((-1.0) ** n) * math.sin(0.5 * math.pi * j)
            out[j - 1] = sign * (math.sqrt(2.0) / math.pi) * 4.0 * n / (4.0 * n * n - j * j)
    return out


class EntangledState:
    """Two particles in separate 1D boxes sharing a non-product wavefunction.

    The state is a list of ((a, b), amplitude) pairs over modes of box A
    (particle 1, width ``side_a``) and box B (particle 2, width ``side_b``).
    The guidance velocity of particle 1 then depends instantly on anything
    done to box B, because psi lives on the joint configuration space.

    At ``event_time`` box B doubles in width (sudden approximation: psi is
    continuous across the jump) and the B factor is re-expanded over the
    first ``truncation`` modes of the widened box.  The re-expanded matrix

        D_aj = sum_k C_ak exp(-i E^B_k t_op) d_jk

    must retain squared norm within ``truncation_tol`` of 1 or construction
    fails.  ``event_time=math.inf`` (the default) means the walls are never
    touched.
    """

    def __init__(self, pairs, side_a: float = DEFAULT_SIDE, side_b: float = DEFAULT_SIDE,
                 event_time: float = math.inf, truncation: int = 64,
                 truncation_tol: float = 1e-3):
        if not pairs:
            raise ConfigurationError("entangled state needs at least one (a, b) pair")
        labels = []
        amps = []
        for (a, b), c in pairs:
            a, b = int(a), int(b)
            if a < 1 or b < 1:
                raise ConfigurationError("mode numbers must be positive integers")
            labels.append((a, b))
            amps.append(complex(c))
        if len(set(labels)) != len(labels):
            raise ConfigurationError("duplicate (a, b) pairs in entangled state")
        self.pair_modes = np.asarray(labels, dtype=np.int64)
        self.amplitudes = np.asarray(amps, dtype=np.complex128)
        _check_amplitudes(self.amplitudes, "entangled")
        self.geometry_a = BoxGeometry(1, side_a)
        self.geometry_b = BoxGeometry(1, side_b)
        if not (event_time > 0.0):
            raise ConfigurationError(f"event_time must be positive, got {event_time}")
        self.event_time = float(event_time)
        self.truncation = int(truncation)
        self.truncation_tol = float(truncation_tol)
        if self.truncation < 2 * int(self.pair_modes[:, 1].max()):
            raise ConfigurationError("truncation must cover at least the resonant doubled modes")
        pair_e = (self._energies_a(self.pair_modes[:, 0])
                  + self._energies_b(self.pair_modes[:, 1], widened=False))
        # Degenerate pairs share one global phase before the event, so the
        # state is effectively real there and its guidance velocity vanishes.
        self._pre_uniform = bool(np.all(pair_e == pair_e[0]))
        self._post = self._expand_after_event() if math.isfinite(self.event_time) else None

    @property
    def dim(self) -> int:
        return 2

    def _energies_a(self, a: NDArray) -> NDArray[np.float64]:
        return 0.5 * (math.pi / self.geometry_a.side) ** 2 * a.astype(float) ** 2

    def _energies_b(self, b: NDArray, widened: bool) -> NDArray[np.float64]:
        width = self.geometry_b.side * (2.0 if widened else 1.0)
        return 0.5 * (math.pi / width) ** 2 * b.astype(float) ** 2

    def _expand_after_event(self):
        """Re-expand the B factor over doubled-box modes at the event."""
        a_modes = np.unique(self.pair_modes[:, 0])
        K = self.truncation
        D = np.zeros((a_modes.size, K), dtype=np.complex128)
        overlap_rows = {}
        for (a, b), c in zip(self.pair_modes, self.amplitudes):
            if int(b) not in overlap_rows:
                overlap_rows[int(b)] = wall_expansion_coefficients(int(b), K, self.geometry_b.side)
            phase = cmath.exp(-1j * self._energies_b(np.array([b]), widened=False)[0] * self.event_time)
            row = int(np.searchsorted(a_modes, a))
            D[row] += c * phase * overlap_rows[int(b)]
        norm = float(np.sum(np.abs(D) ** 2))
        if norm < 1.0 - self.truncation_tol:
            raise TruncationError(
                f"doubled-box expansion keeps squared norm {norm:.6f} < 1 - {self.truncation_tol} "
                f"with {K} modes; raise truncation")
        return a_modes, D

    @property
    def post_event_norm(self) -> float | None:
        if self._post is None:
            return None
        return float(np.sum(np.abs(self._post[1]) ** 2))

    def sides_at(self, t: float) -> tuple[float, float]:
        """Joint box sides (side_a, side_b(t)); B doubles at the event."""
        wide = math.isfinite(self.event_time) and t >= self.event_time
        return (self.geometry_a.side, self.geometry_b.side * (2.0 if wide else 1.0))

    def evaluate(self, x, t: float) -> WaveEvaluation:
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        La = self.geometry_a.side
        Lb = self.geometry_b.side
        ka = math.pi / La
        after = math.isfinite(self.event_time) and t >= self.event_time
        psi = 0.0 + 0.0j
        gx = 0.0 + 0.0j
        gy = 0.0 + 0.0j
        if not after:
            kb = math.pi / Lb
            norm = math.sqrt(2.0 / La) * math.sqrt(2.0 / Lb)
            for (a, b), c in zip(self.pair_modes, self.amplitudes):
                ea = self._energies_a(np.array([a]))[0]
                eb = self._energies_b(np.array([b]), widened=False)[0]
                ph = cmath.exp(-1j * (ea + eb) * t)
                sa, ca_ = math.sin(a * ka * pt[0]), math.cos(a * ka * pt[0])
                sb, cb = math.sin(b * kb * pt[1]), math.cos(b * kb * pt[1])
                psi += c * ph * norm * sa * sb
                gx += c * ph * norm * ca_ * (a * ka) * sb
                gy += c * ph * norm * sa * cb * (b * kb)
        else:
            a_modes, D = self._post
            kb2 = math.pi / (2.0 * Lb)
            norm = math.sqrt(2.0 / La) * math.sqrt(1.0 / Lb)
            tau = t - self.event_time
            j = np.arange(1, self.truncation + 1, dtype=float)
            ej = 0.5 * kb2 * kb2 * j * j
            phase_j = np.exp(-1j * ej * tau)
            sj = np.sin(j * kb2 * pt[1])
            cj = np.cos(j * kb2 * pt[1])
            for row, a in enumerate(a_modes):
                ea = self._energies_a(np.array([a]))[0]
                pha = cmath.exp(-1j * ea * t)
                row_sum = complex(np.sum(D[row] * phase_j * sj))
                row_dsum = complex(np.sum(D[row] * phase_j * cj * (j * kb2)))
                sa, ca_ = math.sin(a * ka * pt[0]), math.cos(a * ka * pt[0])
                psi += pha * norm * sa * row_sum
                gx += pha * norm * ca_ * (a * ka) * row_sum
                gy += pha * norm * sa * row_dsum
        grad = np.array([gx, gy], dtype=np.complex128)
        return WaveEvaluation(psi=complex(psi), grad=grad, density=abs(psi) ** 2,
                              uniform_phase=self._pre_uniform and not after)


class ExpandingBoxState:
    """Superposition in a 1D box whose right wall recedes at constant speed.

    Instantaneous width L(t) = L0 + rate * t.  The moving-wall modes carry a
    quadratic phase exp(i rate x^2 / (2 L(t))) and a reparametrized time
    tau(t) = t / (L0 L(t)); each is an exact solution, so the evolution here
    is closed-form for any rate >= 0.  rate = 0 reduces to the static 1D box.

    As the box expands the energy gaps fall off as 1/L(t)^2, the guidance
    velocities fall with them, and an out-of-equilibrium ensemble relaxes
    more and more slowly: rapid expansion strands the distribution away from
    |psi|^2.
    """

    def __init__(self, modes, amplitudes, side: float = DEFAULT_SIDE, rate: float = 0.0):
        self.geometry = BoxGeometry(1, side)
        self.modes = _as_mode_array(modes, 1)
        self.amplitudes = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if self.amplitudes.shape[0] != self.modes.shape[0]:
            raise ConfigurationError(
                f"{self.modes.shape[0]} modes but {self.amplitudes.shape[0]} amplitudes")
        if not (rate >= 0.0 and math.isfinite(rate)):
            raise ConfigurationError(f"expansion rate must be finite and >= 0, got {rate}")
        self.rate = float(rate)
        _check_amplitudes(self.amplitudes, "expanding-box")

    @property
    def dim(self) -> int:
        return 1

    def width_at(self, t: float) -> float:
        w = self.geometry.side + self.rate * t
        if w <= 0.0:
            raise ConfigurationError(f"box width {w} not positive at t={t}")
        return w

    def sides_at(self, t: float) -> tuple[float]:
        return (self.width_at(t),)

    def evaluate(self, x, t: float) -> WaveEvaluation:
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        L0 = self.geometry.side
        L = self.width_at(t)
        tau = t / (L0 * L)
        k = math.pi / L
        amp_norm = math.sqrt(2.0 / L)
        quad = cmath.exp(1j * self.rate * pt[0] * pt[0] / (2.0 * L))
        psi = 0.0 + 0.0j
        gx = 0.0 + 0.0j
        for (m,), c in zip(self.modes, self.amplitudes):
            ph = cmath.exp(-1j * 0.5 * (m * math.pi) ** 2 * tau)
            s, co = math.sin(m * k * pt[0]), math.cos(m * k * pt[0])
            psi += c * ph * amp_norm * s
            gx += c * ph * amp_norm * (co * (m * k) + 1j * (self.rate * pt[0] / L) * s)
        psi *= quad
        gx *= quad
        return WaveEvaluation(psi=complex(psi), grad=np.array([gx], dtype=np.complex128),
                              density=abs(psi) ** 2)


State = ModeSuperposition | EntangledState | ExpandingBoxState


def eval_state(state, x, t: float) -> WaveEvaluation:
    """psi, grad psi and |psi|^2 for any wavefunction family at one point.

    The point must lie strictly inside the box (or boxes) at time t.
    """
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    sides = state.sides_at(t)
    if pt.shape != (len(sides),):
        raise ConfigurationError(f"point shape {pt.shape} does not match state dim {len(sides)}")
    for comp, side in zip(pt, sides):
        if not (0.0 < comp < side):
            raise ConfigurationError(f"point {tuple(pt)} outside the open box at t={t}")
    return state.evaluate(pt, t)


def velocity(ev: WaveEvaluation, node_floor: float = 0.0) -> NDArray[np.float64]:
    """Guidance velocity v = Im(grad psi / psi) from one evaluation.

    The ratio diverges on nodes of psi; a NodeError is raised when |psi|^2
    does not exceed ``node_floor``.  Trajectory integration applies its own
    configured floor instead of calling through here.
    """
    if ev.density <= node_floor or ev.density == 0.0:
        raise NodeError(f"|psi|^2 = {ev.density} at or below the node floor {node_floor}")
    if ev.uniform_phase:
        return np.zeros(ev.grad.shape[0])
    return ev.guidance_scale * np.imag(ev.grad / ev.psi)


def born_density(ev: WaveEvaluation) -> float:
    """|psi|^2 from one evaluation."""
    return ev.density
