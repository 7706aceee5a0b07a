"""Exact stroboscopic evolution under repeated detection at one site.

The state between measurements is carried un-normalized, so its squared norm
is directly the survival probability after n detection attempts. Each cycle
(unitary drift for time tau, then removal of the detector-site amplitude)
costs O(N) in the lattice eigenbasis. A dense position-basis evolution with
an independently built propagator serves as the cross-validation oracle for
small systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._stepping import run_recorded
from .errors import InvalidSpecError, OracleSizeError
from .lattice import (
    LatticeSpec,
    SpectralBasis,
    dense_hamiltonian,
    full_lattice_basis,
    reduced_open_basis,
)

__all__ = [
    "WaveState",
    "MeasurementSchedule",
    "SurvivalSeries",
    "init_state",
    "step",
    "evolve",
    "dense_oracle_evolve",
    "position_amplitudes",
]

# below double-precision significance; sensible default for open chains,
# where survival really does go to zero
OPEN_STOP_SURVIVAL = 1e-12

MAX_RECORDS = 20_000_000  # refuse record grids that would not fit in memory


@dataclass
class MeasurementSchedule:
    """How often to measure, for how long, and what to record.

    ``recording`` is one of ``'every'`` (every step), ``'stride:K'`` (every
    K-th step) or ``'log'`` (approximately ``points_per_decade`` records per
    decade of step number; the default, since tails span many decades).
    ``stop_survival=None`` picks the boundary-appropriate default at run
    time: 1e-12 for open chains, 0 for rings (whose survival plateaus, so
    only ``max_steps`` terminates the run).
    """

    tau: float
    max_steps: int
    stop_survival: float | None = None
    recording: str = "log"
    points_per_decade: int = 50

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidSpecError(f"tau must be positive, got {self.tau}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise InvalidSpecError(f"max_steps must be an integer >= 1, got {self.max_steps}")
        self.max_steps = int(self.max_steps)
        if self.stop_survival is not None and not 0.0 <= self.stop_survival < 1.0:
            raise InvalidSpecError("stop_survival must lie in [0, 1)")
        self.record_stride()  # validate the recording string eagerly

    def record_stride(self) -> int | None:
        """Stride K for linear recording, None for the log grid."""
        if self.recording == "every":
            return 1
        if self.recording.startswith("stride:"):
            k = int(self.recording.split(":", 1)[1])
            if k < 1:
                raise InvalidSpecError(f"stride must be >= 1, got {k}")
            return k
        if self.recording == "log":
            return None
        raise InvalidSpecError(f"recording must be 'every', 'stride:K' or 'log', got {self.recording!r}")


@dataclass
class WaveState:
    """Un-normalized post-measurement state in the lattice eigenbasis.

    ``survival`` tracks the squared norm of ``coeffs`` through the exact
    telescoping update survival -= |a|^2; ``clamped`` flags the (rounding
    only) event of the subtraction dipping below zero.
    """

    spec: LatticeSpec
    basis: SpectralBasis
    coeffs: np.ndarray
    survival: float = 1.0
    step_count: int = 0
    clamped: bool = False
    initial: str = "explicit"

    def norm_squared(self) -> float:
        c = self.coeffs
        return float(np.real(np.vdot(c, c)))


@dataclass
class SurvivalSeries:
    """Recorded survival probabilities P_n at steps n (time t = n tau)."""

    tau: float
    n_sites: int
    detector_site: int
    boundary: str
    initial: str
    steps: np.ndarray
    times: np.ndarray
    survival: np.ndarray
    terminal_reason: str
    clamped: bool = False

    @property
    def x(self) -> np.ndarray:
        """Scaling variable x = t * tau / N per record."""
        return self.times * self.tau / self.n_sites

    def __len__(self) -> int:
        return len(self.steps)


def _site_amplitudes(spec: LatticeSpec, basis: SpectralBasis, initial) -> np.ndarray:
    """Complex site-amplitude vector for any accepted initial-state form."""
    n = spec.n_sites
    if isinstance(initial, str):
        kind, _, arg = initial.partition(":")
        if not arg:
            raise InvalidSpecError(f"initial state {initial!r} is missing its index")
        idx = int(arg)
        if kind == "pos":
            if not 1 <= idx <= n:
                raise InvalidSpecError(f"initial site must lie in 1..{n}, got {idx}")
            amp = np.zeros(n, dtype=complex)
            amp[idx - 1] = 1.0
            return amp
        if kind == "mode":
            return basis.vector(idx).astype(complex)
        if kind == "reduced-mode":
            if spec.detector_site != n:
                raise InvalidSpecError("reduced-mode initial states assume the detector at site N")
            reduced = reduced_open_basis(n)
            amp = np.zeros(n, dtype=complex)
            amp[: n - 1] = reduced.vector(idx)
            return amp
        raise InvalidSpecError(f"unknown initial state kind {kind!r}")
    amp = np.asarray(initial, dtype=complex)
    if amp.shape != (n,):
        raise InvalidSpecError(f"explicit initial vector must have length {n}, got shape {amp.shape}")
    norm = math.sqrt(float(np.real(np.vdot(amp, amp))))
    if norm < 1e-9:
        raise InvalidSpecError("explicit initial vector is numerically zero")
    if abs(norm - 1.0) > 1e-9:
        raise InvalidSpecError(f"explicit initial vector must be normalized to 1e-9, norm was {norm}")
    return amp / norm


def _describe(initial) -> str:
    return initial if isinstance(initial, str) else "explicit"


def init_state(spec: LatticeSpec, initial) -> WaveState:
    """Prepare a unit-survival state in the full-lattice eigenbasis.

    Parameters
    ----------
    spec : LatticeSpec
    initial : str or array_like
        ``'pos:L'`` (particle at site L), ``'mode:S'`` (eigenstate S of the
        full lattice), ``'reduced-mode:S'`` (eigenstate S of the chain with
        the detector site removed, embedded with zero detector amplitude),
        or an explicit complex site-amplitude vector of unit norm.
    """
    basis = full_lattice_basis(spec)
    if isinstance(initial, str) and initial.startswith("mode:"):
        # exact basis vector; the generic transform would only add noise
        idx = basis._check_mode(int(initial.partition(":")[2]))
        coeffs = np.zeros(spec.n_sites, dtype=complex)
        coeffs[idx - 1] = 1.0
    else:
        amp = _site_amplitudes(spec, basis, initial)
        coeffs = basis.vectors.T @ amp
    return WaveState(spec, basis, coeffs, 1.0, 0, False, _describe(initial))


def step(state: WaveState, tau: float) -> tuple[WaveState, float]:
    """One measurement cycle; returns the new state and the conditional
    non-detection factor P_n / P_{n-1} of this step."""
    if not tau > 0:
        raise InvalidSpecError(f"tau must be positive, got {tau}")
    c = state.coeffs * np.exp(-1j * tau * state.basis.eigenvalues)
    row = state.basis.vectors[state.spec.detector_site - 1]
    a = row @ c
    c -= a * row
    old = state.survival
    survival = old - (a.real * a.real + a.imag * a.imag)
    clamped = state.clamped
    if survival < 0.0:
        survival = 0.0
        clamped = True
    factor = survival / old if old > 0.0 else 1.0
    new_state = WaveState(state.spec, state.basis, c, survival,
                          state.step_count + 1, clamped, state.initial)
    return new_state, factor


def _record_grid(schedule: MeasurementSchedule) -> np.ndarray:
    """Absolute step numbers to record, ending at max_steps."""
    stride = schedule.record_stride()
    if stride is not None:
        count = schedule.max_steps // stride + (1 if schedule.max_steps % stride else 0)
        if count > MAX_RECORDS:
            raise InvalidSpecError(
                f"recording grid of {count} points is too large; use coarser stride or 'log'"
            )
        grid = np.arange(stride, schedule.max_steps + 1, stride, dtype=np.int64)
        if grid[-1] != schedule.max_steps:
            grid = np.append(grid, schedule.max_steps)
        return grid
    factor = 10.0 ** (1.0 / schedule.points_per_decade)
    steps = []
    n = 1
    while n < schedule.max_steps:
        steps.append(n)
        n = max(n + 1, int(n * factor))
    steps.append(schedule.max_steps)
    return np.asarray(steps, dtype=np.int64)


def _resolved_stop(state: WaveState, schedule: MeasurementSchedule) -> float:
    if schedule.stop_survival is not None:
        return schedule.stop_survival
    return OPEN_STOP_SURVIVAL if state.spec.boundary == "open" else 0.0


def evolve(state: WaveState, schedule: MeasurementSchedule) -> SurvivalSeries:
    """Run measurement cycles until max_steps or the survival threshold.

    The state is advanced in place. Records land on the schedule's grid; if
    the threshold fires between grid points the stopping step is recorded as
    the final entry.
    """
    grid = _record_grid(schedule)
    stop = _resolved_stop(state, schedule)
    c_re = np.ascontiguousarray(state.coeffs.real)
    c_im = np.ascontiguousarray(state.coeffs.imag)
    phases = np.exp(-1j * schedule.tau * state.basis.eigenvalues)
    v = np.ascontiguousarray(state.basis.vectors[state.spec.detector_site - 1])
    rec_steps, rec_p, survival, final_step, clamped, stopped = run_recorded(
        c_re, c_im,
        np.ascontiguousarray(phases.real), np.ascontiguousarray(phases.imag),
        v, state.survival, state.step_count, grid, stop,
    )
    state.coeffs = c_re + 1j * c_im
    state.survival = float(survival)
    state.step_count = int(final_step)
    state.clamped = state.clamped or bool(clamped)
    return SurvivalSeries(
        tau=schedule.tau,
        n_sites=state.spec.n_sites,
        detector_site=state.spec.detector_site,
        boundary=state.spec.boundary,
        initial=state.initial,
        steps=rec_steps,
        times=rec_steps * schedule.tau,
        survival=rec_p,
        terminal_reason="threshold" if stopped else "max_steps",
        clamped=bool(clamped),
    )


def position_amplitudes(state: WaveState) -> np.ndarray:
    """Site amplitudes V @ coeffs; the detector entry is ~0 right after a step."""
    return state.basis.vectors @ state.coeffs


# --- dense reference path -------------------------------------------------

ORACLE_MAX_SITES = 64


def _expm_taylor(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a plain Taylor sum.

    Deliberately self-contained (no eigenbasis, no library expm) so the
    oracle shares nothing with the path it checks. Fine for the small dense
    matrices the oracle is restricted to.
    """
    norm = np.max(np.sum(np.abs(a), axis=1))
    squarings = max(0, int(math.ceil(math.log2(norm / 0.25))) if norm > 0.25 else 0)
    scaled = a / (2.0 ** squarings)
    result = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, 40):
        term = term @ scaled / k
        result = result + term
        if np.max(np.abs(term)) < 1e-20:
            break
    for _ in range(squarings):
        result = result @ result
    return result


def dense_oracle_evolve(spec: LatticeSpec, initial, schedule: MeasurementSchedule) -> SurvivalSeries:
    """Reference evolution in the position basis with a dense propagator.

    Same contract as :func:`evolve`, but every ingredient is independent of
    the eigenbasis engine: dense Hamiltonian, Taylor/squaring propagator,
    projection by zeroing the detector component, survival recomputed as the
    squared norm each step. Refuses n_sites > 64.
    """
    if spec.n_sites > ORACLE_MAX_SITES:
        raise OracleSizeError(
            f"dense oracle is limited to {ORACLE_MAX_SITES} sites, got {spec.n_sites}"
        )
    u = _expm_taylor(-1j * schedule.tau * dense_hamiltonian(spec))
    psi = _site_amplitudes(spec, full_lattice_basis(spec), initial)
    grid = _record_grid(schedule)
    stop = OPEN_STOP_SURVIVAL if spec.boundary == "open" else 0.0
    if schedule.stop_survival is not None:
        stop = schedule.stop_survival
    d = spec.detector_site - 1
    rec_steps, rec_p = [], []
    survival = 1.0
    stopped = False
    n = 0
    for target in grid:
        while n < target:
            n += 1
            psi = u @ psi
            psi[d] = 0.0
            survival = float(np.real(np.vdot(psi, psi)))
            if survival < stop:
                stopped = True
                break
        rec_steps.append(n)
        rec_p.append(survival)
        if stopped:
            break
    steps = np.asarray(rec_steps, dtype=np.int64)
    return SurvivalSeries(
        tau=schedule.tau,
        n_sites=spec.n_sites,
        detector_site=spec.detector_site,
        boundary=spec.boundary,
        initial=_describe(initial),
        steps=steps,
        times=steps * schedule.tau,
        survival=np.asarray(rec_p),
        terminal_reason="threshold" if stopped else "max_steps",
    )
