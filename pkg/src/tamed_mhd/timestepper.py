"""Time integration of the tamed MHD system.

Diffusion is integrated exactly through the multiplier ``exp(-|k|^2 h)``;
advection, taming and forcing are explicit.  Two schemes are provided:
exponential time differencing of second order (default) and a classical
fourth-order Runge-Kutta in integrating-factor form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .initial import FORCING_KINDS, INITIAL_KINDS, forcing_field, initial_state
from .measures import DiagnosticsRecord, StepMeasures, make_record, measure_state
from .operators import PressureFields, evolution_rhs, recover_pressures
from .spectral import Grid, SpectralState
from .taming import TamingFunction

__all__ = [
    "INTEGRATORS",
    "SolverConfig",
    "BlowUpError",
    "Stepper",
    "TrajectoryRecord",
    "step",
    "untamed_reference_step",
    "run",
    "phi_functions",
]

INTEGRATORS = ("etd_rk2", "if_rk4")


@dataclass(frozen=True)
class SolverConfig:
    """Everything that determines a run.

    ``dt = None`` selects the adaptive step ``cfl * dx / max(1, sup|y|)``
    clamped to ``dt_max`` and, while taming is active, to ``cfl / rate``
    where ``rate`` is the largest linearised taming decay rate.  ``output_interval = 0`` records every step.
    Viscosity, resistivity and the coupling constant are fixed to one.
    """

    n: int = 32
    length: float = 2.0 * math.pi
    threshold: float = 1.0
    tamed: bool = True
    t_end: float = 0.5
    dt: float | None = None
    cfl: float = 0.4
    dt_max: float = 1e-2
    integrator: str = "etd_rk2"
    initial: str = "taylor_green"
    amplitude: float = 1.0
    magnetic_ratio: float = 0.5
    seed: int = 0
    k_max: float = 4.0
    initial_path: str = ""
    forcing: str = "none"
    forcing_amplitude: float = 1.0
    output_interval: float = 0.0
    snapshots: bool = False

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ValueError(f"taming threshold must be > 0, got {self.threshold}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.cfl > 0 or not self.dt_max > 0:
            raise ValueError("cfl and dt_max must be > 0")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}; expected one of {INTEGRATORS}")
        if self.initial not in INITIAL_KINDS:
            raise ValueError(f"unknown initial condition {self.initial!r}; expected one of {INITIAL_KINDS}")
        if self.forcing not in FORCING_KINDS:
            raise ValueError(f"unknown forcing {self.forcing!r}; expected one of {FORCING_KINDS}")
        if self.output_interval < 0:
            raise ValueError("output_interval must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        Grid(self.n, self.length)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.length)

    def taming(self) -> TamingFunction | None:
        return TamingFunction(self.threshold) if self.tamed else None

    def initial_state(self) -> SpectralState:
        return initial_state(
            self.grid,
            self.initial,
            amplitude=self.amplitude,
            seed=self.seed,
            k_max=self.k_max,
            path=self.initial_path or None,
            magnetic_ratio=self.magnetic_ratio,
        )

    def forcing_coeffs(self) -> np.ndarray | None:
        return forcing_field(self.grid, self.forcing, self.forcing_amplitude)


class BlowUpError(RuntimeError):
    """Non-finite values appeared; carries the failure time and the partial trajectory."""

    def __init__(self, t: float, trajectory: "TrajectoryRecord | None" = None):
        super().__init__(f"non-finite state detected at t={t:.17g}")
        self.t = t
        self.trajectory = trajectory


def phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``exp(z)``, ``(exp(z) - 1)/z`` and ``(exp(z) - 1 - z)/z^2`` without cancellation."""
    z = np.asarray(z, dtype=float)
    ez = np.exp(z)
    small = np.abs(z) < 0.1
    zs = np.where(small, 1.0, z)
    phi1 = (ez - 1.0) / zs
    phi2 = (ez - 1.0 - zs) / zs**2
    # Taylor series for small |z|
    t1 = np.zeros_like(z)
    t2 = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(10):
        t1 += term / math.factorial(k + 1)
        t2 += term / math.factorial(k + 2)
        term = term * z
    return ez, np.where(small, t1, phi1), np.where(small, t2, phi2)


class Stepper:
    """One-step map for a fixed grid, taming and forcing.

    Multipliers are cached per step size.  ``forcing`` is a time-independent
    projected coefficient array or a callable ``t -> coefficients``.
    """

    def __init__(
        self,
        grid: Grid,
        tf: TamingFunction | None,
        forcing: np.ndarray | Callable[[float], np.ndarray | None] | None = None,
        integrator: str = "etd_rk2",
    ):
        if integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {integrator!r}")
        self.grid = grid
        self.tf = tf
        self.forcing = forcing
        self.integrator = integrator
        self._cache: dict[float, tuple[np.ndarray, ...]] = {}

    def _forcing_at(self, t: float) -> np.ndarray | None:
        if callable(self.forcing):
            return self.forcing(t)
        return self.forcing

    def rhs(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        return evolution_rhs(self.grid, coeffs, self.tf, self._forcing_at(t))

    def _multipliers(self, h: float) -> tuple[np.ndarray, ...]:
        if h not in self._cache:
            if len(self._cache) > 4:
                self._cache.clear()
            z = -self.grid.k_squared * h
            if self.integrator == "etd_rk2":
                self._cache[h] = phi_functions(z)
            else:
                self._cache[h] = (np.exp(z), np.exp(0.5 * z))
        return self._cache[h]

    def advance(self, coeffs: np.ndarray, t: float, h: float) -> np.ndarray:
        if self.integrator == "etd_rk2":
            e, p1, p2 = self._multipliers(h)
            n0 = self.rhs(coeffs, t)
            a = e * coeffs + h * p1 * n0
            n1 = self.rhs(a, t + h)
            out = a + h * p2 * (n1 - n0)
        else:
            e, eh = self._multipliers(h)
            k1 = self.rhs(coeffs, t)
            k2 = self.rhs(eh * (coeffs + 0.5 * h * k1), t + 0.5 * h)
            k3 = self.rhs(eh * coeffs + 0.5 * h * k2, t + 0.5 * h)
            k4 = self.rhs(e * coeffs + h * eh * k3, t + h)
            out = e * coeffs + (h / 6.0) * (e * k1 + 2.0 * eh * (k2 + k3) + k4)
        if not np.all(np.isfinite(out)):
            raise BlowUpError(t + h)
        return out

    def step(self, y: SpectralState, h: float) -> SpectralState:
        return y.replace(self.advance(y.coeffs, y.t, h), y.t + h)


def step(
    y: SpectralState,
    tf: TamingFunction | None,
    f: np.ndarray | None,
    dt: float,
    integrator: str = "etd_rk2",
) -> SpectralState:
    """Advance ``y`` by one step of size ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return Stepper(y.grid, tf, f, integrator).step(y, dt)


def untamed_reference_step(
    y: SpectralState, f: np.ndarray | None, dt: float, integrator: str = "etd_rk2"
) -> SpectralState:
    """Same discretisation as :func:`step` with the taming term removed."""
    return step(y, None, f, dt, integrator)


@dataclass
class TrajectoryRecord:
    """Diagnostics at output times plus per-step measures.

    ``states`` and ``pressures`` hold the fields at output times when the
    run was asked to keep them.
    """

    config: SolverConfig
    records: list[DiagnosticsRecord] = field(default_factory=list)
    steps: list[StepMeasures] = field(default_factory=list)
    states: list[SpectralState] = field(default_factory=list)
    pressures: list[PressureFields] = field(default_factory=list)
    final: SpectralState | None = None
    n_steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def step_series(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.steps])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _trapezoid_increment(prev: StepMeasures, cur: StepMeasures) -> tuple[float, float]:
    """Integrals of the dissipation rate and of ``<f, y>`` over one step.

    Trapezoid rule with the endpoint-derivative correction, exact for cubics.
    """
    h = cur.t - prev.t
    corr = h * h / 12.0
    diss = 0.5 * h * (prev.dissipation_rate + cur.dissipation_rate) - corr * (
        cur.dissipation_rate_dot - prev.dissipation_rate_dot
    )
    work = 0.5 * h * (prev.forcing_pairing + cur.forcing_pairing) - corr * (
        cur.forcing_pairing_dot - prev.forcing_pairing_dot
    )
    return diss, work


Observer = Callable[[SpectralState], None]


def run(
    config: SolverConfig,
    observers: Iterable[Observer] = (),
    keep_states: bool = False,
    initial: SpectralState | None = None,
) -> TrajectoryRecord:
    """Integrate ``config`` to ``t_end``.

    Observers are called with the state at ``t = 0`` and after every
    accepted step.  Steps are shortened to land exactly on output times and
    on ``t_end``.  On blow-up a :class:`BlowUpError` carrying the partial
    trajectory is raised.
    """
    grid = config.grid
    tf = config.taming()
    forcing = config.forcing_coeffs()
    stepper = Stepper(grid, tf, forcing, config.integrator)
    state = config.initial_state() if initial is None else initial
    observers = list(observers)
    traj = TrajectoryRecord(config)

    dissipated = 0.0
    work = 0.0
    m = measure_state(state, tf, forcing)
    e0 = m.energy

    def emit(st: SpectralState, meas: StepMeasures) -> None:
        pressures = recover_pressures(st, tf)
        resid = abs(meas.energy + 2.0 * dissipated - e0 - 2.0 * work)
        traj.records.append(make_record(st, meas, tf, resid, pressures))
        if keep_states:
            traj.states.append(st)
            traj.pressures.append(pressures)

    traj.steps.append(m)
    emit(state, m)
    for ob in observers:
        ob(state)

    t_end = config.t_end
    interval = config.output_interval
    next_out = min(interval, t_end) if interval > 0 else t_end
    out_index = 1
    while state.t < t_end:
        if config.dt is not None:
            h = config.dt
        else:
            h = min(config.cfl * grid.dx / max(1.0, math.sqrt(m.sup_sq)), config.dt_max)
            if m.taming_rate > 0:
                h = min(h, config.cfl / m.taming_rate)
        target = next_out
        landing = target - state.t <= h * (1.0 + 1e-6)
        if landing:
            h = target - state.t
        try:
            coeffs = stepper.advance(state.coeffs, state.t, h)
        except BlowUpError as exc:
            traj.final = state
            raise BlowUpError(exc.t, traj) from None
        state = state.replace(coeffs, target if landing else state.t + h)
        traj.n_steps += 1
        prev = m
        m = measure_state(state, tf, forcing)
        d, w = _trapezoid_increment(prev, m)
        dissipated += d
        work += w
        traj.steps.append(m)
        for ob in observers:
            ob(state)
        if landing or interval == 0:
            emit(state, m)
        if landing and interval > 0:
            out_index += 1
            next_out = min(out_index * interval, t_end)
    traj.final = state
    return traj
