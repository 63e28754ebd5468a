"""Checks of the energy identities and a-priori bounds along trajectories.

Also hosts the local energy balance against a space-time bump and the
study of solutions as the taming threshold grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .measures import StepMeasures
from .operators import physical_fields, recover_pressures
from .spectral import Grid, SpectralState
from .taming import TamingFunction
from .timestepper import SolverConfig, TrajectoryRecord, _trapezoid_increment, run

__all__ = [
    "energy_equality_residual",
    "AprioriReport",
    "apriori_checks",
    "TestFunctionPhi",
    "LocalEnergyMonitor",
    "LocalEnergyResult",
    "local_energy_equality_residual",
    "SweepRow",
    "SweepReport",
    "n_sweep",
    "h2_fit",
]


def _cumulative(steps: Sequence[StepMeasures]) -> tuple[np.ndarray, np.ndarray]:
    diss = np.zeros(len(steps))
    work = np.zeros(len(steps))
    for i in range(1, len(steps)):
        d, w = _trapezoid_increment(steps[i - 1], steps[i])
        diss[i] = diss[i - 1] + d
        work[i] = work[i - 1] + w
    return diss, work


def energy_equality_residual(traj: TrajectoryRecord) -> np.ndarray:
    """``| ||y(t)||^2 + 2 int (||grad y||^2 + int g|y|^2) - ||y0||^2 - 2 int <f, y> |`` per output time.

    Time integrals use every accepted step with the endpoint-corrected
    trapezoid rule.
    """
    steps = traj.steps
    diss, work = _cumulative(steps)
    e = np.array([m.energy for m in steps])
    resid = np.abs(e + 2.0 * diss - e[0] - 2.0 * work)
    step_t = np.array([m.t for m in steps])
    idx = np.searchsorted(step_t, traj.times)
    return resid[idx]


@dataclass(frozen=True)
class AprioriReport:
    """Outcome of the a-priori bound checks.

    ``h0_margin`` and ``dissipation_margin`` are the smallest values of
    ``bound - quantity`` over all samples.  ``empirical_constant`` is the
    smallest ``C`` for which the ``H^1`` bound holds on this run and is only
    reported.
    """

    passed: bool
    h0_margin: float
    dissipation_margin: float
    empirical_constant: float
    failures: tuple[str, ...] = ()


def apriori_checks(traj: TrajectoryRecord, slack: float = 1e-8) -> AprioriReport:
    steps = traj.steps
    n = traj.config.threshold
    t = np.array([m.t for m in steps])
    e = np.array([m.energy for m in steps])
    fnorm = np.array([m.forcing_norm for m in steps])
    diss_rate = np.array([m.grad_energy + m.taming_dissipation for m in steps])
    h1 = np.array([m.h1 for m in steps])
    h2_wg = np.array([m.h2 + m.wg_vv + m.wg_BB + m.wg_vB + m.wg_Bv for m in steps])

    def cumtrapz(y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        out[1:] = np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))
        return out

    f_int = cumtrapz(fnorm)
    f_sq_int = cumtrapz(fnorm**2)
    diss_int, _ = _cumulative(steps)

    h0_bound = math.sqrt(e[0]) + f_int
    h0_margin = h0_bound - np.sqrt(e)
    diss_bound = e[0] + 2.0 * f_int**2
    diss_margin = diss_bound - diss_int
    scale_h0 = max(1.0, float(np.max(h0_bound)))
    scale_d = max(1.0, float(np.max(diss_bound)))
    failures = []
    if np.any(h0_margin < -slack * scale_h0):
        failures.append("h0_bound")
    if np.any(diss_margin < -slack * scale_d):
        failures.append("dissipation_bound")

    lhs = h1 + cumtrapz(h2_wg)
    rhs = (h1[0] + f_sq_int) + (1.0 + n + t) * (e[0] + f_int**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, 0.0)
    return AprioriReport(
        passed=not failures,
        h0_margin=float(np.min(h0_margin)),
        dissipation_margin=float(np.min(diss_margin)),
        empirical_constant=float(np.max(ratio)),
        failures=tuple(failures),
    )


# ---------------------------------------------------------------- local energy


def _bump(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``exp(1 - 1/(1 - s^2))`` on ``|s| < 1`` with first and second derivatives."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s**2, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    d1 = val * (-2.0 * s / q**2)
    d2 = val * (4.0 * s**2 / q**4 - 2.0 / q**2 - 8.0 * s**2 / q**3)
    return val, np.where(inside, d1, 0.0), np.where(inside, d2, 0.0)


@dataclass(frozen=True)
class TestFunctionPhi:
    """Product bump ``phi(t, x) = b((t - tc)/tw) * prod_i b((x_i - c_i)/w)``.

    ``b`` is the smooth compactly supported bump, so ``phi`` vanishes with
    all derivatives on the boundary of its support.
    """

    t_start: float
    t_stop: float
    center: tuple[float, float, float]
    width: float

    __test__ = False  # not a pytest class

    def __post_init__(self) -> None:
        if not self.t_stop > self.t_start >= 0:
            raise ValueError("need 0 <= t_start < t_stop")
        if not self.width > 0:
            raise ValueError("width must be positive")

    def check_support(self, grid: Grid) -> None:
        for c in self.center:
            if c - self.width < 0 or c + self.width > grid.length:
                raise ValueError(
                    f"bump support [{c - self.width}, {c + self.width}] leaves the box [0, {grid.length}]"
                )

    def time_factor(self, t: float) -> tuple[float, float]:
        mid = 0.5 * (self.t_start + self.t_stop)
        half = 0.5 * (self.t_stop - self.t_start)
        val, d1, _ = _bump((t - mid) / half)
        return float(val), float(d1) / half

    def space_factor(self, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``psi``, ``grad psi`` of shape ``(3, n, n, n)`` and ``Lap psi`` on the grid.

        Each 1D factor is truncated to the Fourier band of ``grid``, so the
        rectangle sum of ``F psi`` equals the exact integral whenever ``F``
        is resolved by ``grid``.
        """
        self.check_support(grid)
        parts = [self._axis_factor(grid, c) for c in self.center]
        vals = [p[0] for p in parts]
        psi = vals[0][:, None, None] * vals[1][None, :, None] * vals[2][None, None, :]
        grad = []
        lap = np.zeros(grid.physical_shape)
        for i in range(3):
            f = [vals[0], vals[1], vals[2]]
            f[i] = parts[i][1]
            grad.append(f[0][:, None, None] * f[1][None, :, None] * f[2][None, None, :])
            f[i] = parts[i][2]
            lap = lap + f[0][:, None, None] * f[1][None, :, None] * f[2][None, None, :]
        return psi, np.stack(grad), lap

    def _axis_factor(self, grid: Grid, center: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # the bump spectrum decays slowly, so sample it far finer than any grid
        fine = max(1 << 15, 64 * grid.n)
        x = np.arange(fine) * (grid.length / fine)
        coef = np.fft.rfft(_bump((x - center) / self.width)[0], norm="forward")
        k = np.arange(grid.n // 2) * grid.base_wavenumber
        band = coef[: grid.n // 2]

        def synth(c: np.ndarray) -> np.ndarray:
            out = np.zeros(grid.n // 2 + 1, complex)
            out[: grid.n // 2] = c
            return np.fft.irfft(out, n=grid.n, norm="forward")

        return synth(band), synth(1j * k * band), synth(-(k**2) * band)


@dataclass(frozen=True)
class LocalEnergyResult:
    lhs: float
    rhs_terms: dict[str, float]
    residual: float
    scale: float

    @property
    def rhs(self) -> float:
        return float(sum(self.rhs_terms.values()))

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else abs(self.residual)


class LocalEnergyMonitor:
    """Observer that accumulates both sides of the local energy balance.

    The convective flux uses the total pressure ``p + |B|^2/2``; with the
    kinematic pressure in its place the balance does not close.
    Space integrals are rectangle sums on a grid ``oversample`` times finer,
    onto which the band-limited fields are zero-padded.  The bump is
    band-limited to that grid, so every term except the taming one is
    integrated exactly once the grid resolves products of three fields.  Time integrals use the
    trapezoid rule over the observed states.
    """

    TERMS = ("heat", "forcing", "magnetic_pressure", "convective", "magnetic_tension")

    def __init__(
        self,
        phi: TestFunctionPhi,
        tf: TamingFunction | None,
        forcing: np.ndarray | None = None,
        pressure: str = "total",
        oversample: int = 2,
    ):
        if pressure not in ("total", "kinematic"):
            raise ValueError("pressure must be 'total' or 'kinematic'")
        if oversample < 1:
            raise ValueError("oversample must be >= 1")
        self.phi = phi
        self.tf = tf
        self.forcing = forcing
        self.pressure = pressure
        self.oversample = int(oversample)
        self._fine: Grid | None = None
        self._space = None
        self.samples: list[tuple[float, float, np.ndarray]] = []

    def __call__(self, state: SpectralState) -> None:
        grid = state.grid
        if self._space is None:
            self._fine = Grid(self.oversample * grid.n, grid.length)
            self._space = self.phi.space_factor(self._fine)
        fine = self._fine
        psi, grad_psi, lap_psi = self._space
        bt, dbt = self.phi.time_factor(state.t)
        phi = bt * psi
        grad_phi = bt * grad_psi
        dt_lap = dbt * psi + bt * lap_psi

        pf = physical_fields(fine, grid.pad(state.coeffs, fine))
        y, v, b = pf.y, pf.v, pf.b
        r = np.sum(y**2, axis=0)
        q = fine.quadrature
        lhs = 2.0 * q(np.sum(pf.grad**2, axis=(0, 1)) * phi)
        g = None
        if self.tf is not None:
            g = self.tf.value(r)
            lhs += 2.0 * q(g * r * phi)
        pressures = recover_pressures(state, self.tf)
        pi = fine.to_physical(grid.pad(pressures.pi, fine))
        p = fine.to_physical(grid.pad(pressures.total if self.pressure == "total" else pressures.p, fine))
        v_dot = np.sum(v * grad_phi, axis=0)
        b_dot = np.sum(b * grad_phi, axis=0)
        terms = np.array([
            q(r * dt_lap),
            0.0 if self.forcing is None else 2.0 * q(np.sum(y * fine.to_physical(grid.pad(self.forcing, fine)), axis=0) * phi),
            -2.0 * q(pi * b_dot),
            q((r - 2.0 * p) * v_dot),
            -2.0 * q(np.sum(b * v, axis=0) * b_dot),
        ])
        self.samples.append((state.t, lhs, terms))

    def result(self) -> LocalEnergyResult:
        if not self.samples:
            return LocalEnergyResult(0.0, {k: 0.0 for k in self.TERMS}, 0.0, 0.0)
        t = np.array([s[0] for s in self.samples])
        lhs_t = np.array([s[1] for s in self.samples])
        terms_t = np.array([s[2] for s in self.samples])
        w = np.zeros_like(t)
        if len(t) > 1:
            dt = np.diff(t)
            w[:-1] += 0.5 * dt
            w[1:] += 0.5 * dt
        lhs = float(w @ lhs_t)
        terms = {k: float(v) for k, v in zip(self.TERMS, w @ terms_t)}
        rhs = sum(terms.values())
        scale = abs(lhs) + sum(abs(v) for v in terms.values())
        return LocalEnergyResult(lhs, terms, lhs - rhs, scale)


def local_energy_equality_residual(
    states: Iterable[SpectralState],
    phi: TestFunctionPhi,
    tf: TamingFunction | None,
    forcing: np.ndarray | None = None,
    oversample: int = 2,
) -> LocalEnergyResult:
    """Both sides of the local energy balance along a sequence of states."""
    mon = LocalEnergyMonitor(phi, tf, forcing, oversample=oversample)
    for s in states:
        mon(s)
    return mon.result()


# ------------------------------------------------------------------ N sweep


@dataclass(frozen=True)
class SweepRow:
    """Summary of one run of the sweep.

    ``distance_to_next`` is the space-time ``L2`` distance to the next
    threshold in the list (``nan`` for the last one).
    """

    threshold: float
    pi_integral: float
    taming_peak: float
    taming_active: bool
    h2_sup: float
    distance_to_next: float
    identical_to_next: bool
    pi_identically_zero: bool


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]
    saturation: float | None
    fit_intercept: float
    fit_slope: float
    h2_monotone: bool

    columns = (
        "N",
        "pi_integral",
        "taming_peak",
        "taming_active",
        "h2_sup",
        "distance_to_next",
        "identical_to_next",
        "pi_identically_zero",
        "h2_fit",
    )

    def table(self) -> list[tuple]:
        out = []
        for r in self.rows:
            fit = self.fit_intercept + self.fit_slope * (1.0 + r.threshold**2)
            out.append((
                r.threshold, r.pi_integral, r.taming_peak, int(r.taming_active), r.h2_sup,
                r.distance_to_next, int(r.identical_to_next), int(r.pi_identically_zero), fit,
            ))
        return out


def h2_fit(thresholds: Sequence[float], h2_sup: Sequence[float]) -> tuple[float, float, bool]:
    """Least-squares fit ``sup ||y||_{H2}^2 ~ a + b (1 + N^2)``.

    Returns ``(a, b, monotone)`` where ``monotone`` says the measured suprema
    are nondecreasing in ``N``.
    """
    n = np.asarray(thresholds, dtype=float)
    h = np.asarray(h2_sup, dtype=float)
    order = np.argsort(n)
    n, h = n[order], h[order]
    design = np.column_stack([np.ones_like(n), 1.0 + n**2])
    (a, b), *_ = np.linalg.lstsq(design, h, rcond=None)
    monotone = bool(np.all(np.diff(h) >= -1e-12 * np.max(np.abs(h))))
    return float(a), float(b), monotone


def _space_time_distance(a: TrajectoryRecord, b: TrajectoryRecord) -> tuple[float, bool]:
    ta, tb = a.times, b.times
    if len(ta) != len(tb) or not np.array_equal(ta, tb):
        raise ValueError("sweep members must share output times")
    grid = a.config.grid
    sq = np.array([grid.inner(x.coeffs - y.coeffs, x.coeffs - y.coeffs) for x, y in zip(a.states, b.states)])
    identical = all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a.states, b.states))
    if len(ta) < 2:
        return 0.0, identical
    return float(np.sqrt(np.sum(0.5 * np.diff(ta) * (sq[1:] + sq[:-1])))), identical


def n_sweep(config: SolverConfig, thresholds: Sequence[float]) -> SweepReport:
    """Run ``config`` for each taming threshold and summarise the trend.

    The ``pi`` integral is ``int ||pi_N||_{L^{9/5}}^{9/8} dt`` by the trapezoid
    rule on the output times, so ``config.output_interval`` should resolve
    the transient.
    """
    thresholds = sorted(float(x) for x in thresholds)
    trajs = [run(config.with_(threshold=n, tamed=True), keep_states=True) for n in thresholds]
    rows = []
    for i, (n, tr) in enumerate(zip(thresholds, trajs)):
        t = tr.times
        pi = tr.column("pi_l95") ** (9.0 / 8.0)
        pi_int = float(np.sum(0.5 * np.diff(t) * (pi[1:] + pi[:-1]))) if len(t) > 1 else 0.0
        peak = max(m.taming_peak for m in tr.steps)
        if i + 1 < len(trajs):
            dist, same = _space_time_distance(tr, trajs[i + 1])
        else:
            dist, same = float("nan"), False
        rows.append(SweepRow(
            threshold=n,
            pi_integral=pi_int,
            taming_peak=peak,
            taming_active=peak > 0,
            h2_sup=max(m.h2 for m in tr.steps),
            distance_to_next=dist,
            identical_to_next=same,
            pi_identically_zero=all(not np.any(p.pi) for p in tr.pressures),
        ))
    saturation = None
    for i in range(len(rows)):
        if not any(r.taming_active for r in rows[i:]):
            saturation = rows[i].threshold
            break
    a, b, mono = h2_fit([r.threshold for r in rows], [r.h2_sup for r in rows])
    return SweepReport(tuple(rows), saturation, a, b, mono)
