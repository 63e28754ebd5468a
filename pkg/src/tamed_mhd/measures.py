"""Scalar measures of a state, shared by the timestepper and the diagnostics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .operators import PressureFields, evolution_rhs, physical_fields, recover_pressures, weighted_gradients
from .spectral import SpectralState
from .taming import TamingFunction

__all__ = ["DiagnosticsRecord", "StepMeasures", "measure_state", "make_record", "PRESSURE_EXPONENT"]

# pressures are measured in L^{9/5}
PRESSURE_EXPONENT = 9.0 / 5.0


@dataclass(frozen=True)
class StepMeasures:
    """Quantities sampled after every accepted step.

    ``h1`` and ``h2`` are squared Sobolev norms.  ``dissipation_rate`` is
    ``||grad y||^2 + int g_N |y|^2`` and the ``*_dot`` fields are exact time
    derivatives along the semi-discrete flow, used by the corrected
    trapezoid rule for the energy balance.
    """

    t: float
    energy: float
    grad_energy: float
    h1: float
    h2: float
    taming_dissipation: float
    wg_vv: float
    wg_BB: float
    wg_vB: float
    wg_Bv: float
    forcing_pairing: float
    forcing_norm: float
    sup_sq: float
    taming_peak: float
    taming_rate: float
    dissipation_rate_dot: float
    forcing_pairing_dot: float

    @property
    def dissipation_rate(self) -> float:
        return self.grad_energy + self.taming_dissipation


def measure_state(state: SpectralState, tf: TamingFunction | None, forcing: np.ndarray | None) -> StepMeasures:
    grid = state.grid
    c = state.coeffs
    pf = physical_fields(grid, c)
    r = np.sum(pf.y**2, axis=0)
    ydot = grid.laplacian(c) + evolution_rhs(grid, c, tf, forcing)
    rdot = 2.0 * np.sum(pf.y * grid.to_physical(ydot), axis=0)
    diss_dot = 2.0 * grid.inner(grid.k_squared * ydot, c)
    energy = grid.sobolev_sq(c, 0)
    h1 = grid.sobolev_sq(c, 1)
    h2 = grid.sobolev_sq(c, 2)
    if tf is None:
        tam, peak, rate = 0.0, 0.0, 0.0
    else:
        g = tf.value(r)
        tam = grid.quadrature(g * r)
        peak = float(np.max(g))
        # largest decay rate of the linearised taming term
        rate = float(np.max(g + 2.0 * r * tf.derivative(r)))
        diss_dot += grid.quadrature((tf.derivative(r) * r + g) * rdot)
    if forcing is None:
        fpair, fnorm, fdot = 0.0, 0.0, 0.0
    else:
        fpair = grid.inner(forcing, c)
        fdot = grid.inner(forcing, ydot)
        fnorm = float(np.sqrt(grid.inner(forcing, forcing)))
    wg = weighted_gradients(grid, pf)
    return StepMeasures(
        t=state.t,
        energy=energy,
        grad_energy=h1 - energy,
        h1=h1,
        h2=h2,
        taming_dissipation=tam,
        forcing_pairing=fpair,
        forcing_norm=fnorm,
        sup_sq=float(np.max(r)),
        taming_peak=peak,
        taming_rate=rate,
        dissipation_rate_dot=diss_dot,
        forcing_pairing_dot=fdot,
        **wg,
    )


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of the diagnostics CSV.

    ``h1`` and ``h2`` are squared norms; ``p_l95`` and ``pi_l95`` are
    ``L^{9/5}`` norms of the kinematic and magnetic pressures.
    """

    t: float
    energy: float
    grad_energy: float
    h1: float
    h2: float
    taming_dissipation: float
    wg_vv: float
    wg_BB: float
    wg_vB: float
    wg_Bv: float
    div_v_max: float
    div_B_max: float
    p_l95: float
    pi_l95: float
    energy_residual: float

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def values(self) -> tuple[float, ...]:
        return tuple(asdict(self).values())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values())))


def make_record(
    state: SpectralState,
    m: StepMeasures,
    tf: TamingFunction | None,
    energy_residual: float,
    pressures: PressureFields | None = None,
) -> DiagnosticsRecord:
    grid = state.grid
    div_v, div_b = state.divergence_max()
    if pressures is None:
        pressures = recover_pressures(state, tf)
    p_norm = grid.lp_norm(grid.to_physical(pressures.p), PRESSURE_EXPONENT)
    pi_norm = grid.lp_norm(grid.to_physical(pressures.pi), PRESSURE_EXPONENT)
    return DiagnosticsRecord(
        t=state.t,
        energy=m.energy,
        grad_energy=m.grad_energy,
        h1=m.h1,
        h2=m.h2,
        taming_dissipation=m.taming_dissipation,
        wg_vv=m.wg_vv,
        wg_BB=m.wg_BB,
        wg_vB=m.wg_vB,
        wg_Bv=m.wg_Bv,
        div_v_max=div_v,
        div_B_max=div_b,
        p_l95=p_norm,
        pi_l95=pi_norm,
        energy_residual=energy_residual,
    )
