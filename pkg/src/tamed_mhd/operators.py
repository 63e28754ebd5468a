"""Tamed MHD operators: nonlinearity, taming term, pressures and pairings.

The evolution operator is

    A(y) = Lap y - P[(v.grad)v - (B.grad)B, (v.grad)B - (B.grad)v] - P[g_N(|y|^2) y]

with ``P`` the Leray projector.  Every pointwise product is formed on the
grid and truncated with the two-thirds mask before projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Grid, SpectralState
from .taming import TamingFunction

__all__ = [
    "PhysicalFields",
    "RhsParts",
    "PressureFields",
    "advect",
    "physical_fields",
    "nonlinear_term",
    "taming_term",
    "evolution_rhs",
    "rhs_full",
    "curl_identity_residual",
    "recover_pressures",
    "pressure_residuals",
    "weighted_gradients",
    "a_pairing_h0",
    "pairing_h0_closed_form",
    "a_pairing_h1",
    "main_estimate_bound",
]


@dataclass(frozen=True)
class PhysicalFields:
    """Grid values of ``y`` and of ``grad y`` (``grad[i, j] = d_j y_i``)."""

    y: np.ndarray
    grad: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return self.y[:3]

    @property
    def b(self) -> np.ndarray:
        return self.y[3:]

    @property
    def grad_v(self) -> np.ndarray:
        return self.grad[:3]

    @property
    def grad_b(self) -> np.ndarray:
        return self.grad[3:]


def physical_fields(grid: Grid, coeffs: np.ndarray) -> PhysicalFields:
    return PhysicalFields(grid.to_physical(coeffs), grid.to_physical(grid.gradient(coeffs)))


def _transport(u: np.ndarray, grad_w: np.ndarray) -> np.ndarray:
    # (u.grad) w_i = sum_j u_j d_j w_i
    return np.einsum("j...,ij...->i...", u, grad_w)


def advect(grid: Grid, u_hat: np.ndarray, w_hat: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of ``(u.grad) w``."""
    u = grid.to_physical(u_hat)
    grad_w = grid.to_physical(grid.gradient(w_hat))
    return grid.dealias(grid.to_fourier(_transport(u, grad_w)))


def nonlinear_term(grid: Grid, pf: PhysicalFields) -> np.ndarray:
    """Dealiased, unprojected ``(-(v.grad)v + (B.grad)B, -(v.grad)B + (B.grad)v)``."""
    v, b = pf.v, pf.b
    out = np.empty_like(pf.y)
    out[:3] = _transport(b, pf.grad_b) - _transport(v, pf.grad_v)
    out[3:] = _transport(b, pf.grad_v) - _transport(v, pf.grad_b)
    return grid.dealias(grid.to_fourier(out))


def taming_term(grid: Grid, tf: TamingFunction | None, y: np.ndarray) -> np.ndarray | None:
    """Dealiased coefficients of ``g_N(|y|^2) y``, or ``None`` when it vanishes identically."""
    if tf is None:
        return None
    g = tf.value(np.sum(y**2, axis=0))
    if not np.any(g):
        return None
    return grid.dealias(grid.to_fourier(g * y))


def _project_pair(grid: Grid, c: np.ndarray) -> np.ndarray:
    return np.concatenate([grid.leray(c[:3]), grid.leray(c[3:])])


def evolution_rhs(
    grid: Grid,
    coeffs: np.ndarray,
    tf: TamingFunction | None,
    forcing: np.ndarray | None = None,
) -> np.ndarray:
    """Nonlinear part of the right-hand side, ``A(y) - Lap y + f``.

    ``forcing`` must already be projected.  When the taming term vanishes on
    the grid it is skipped entirely, so a tamed run whose taming never
    activates reproduces the untamed run bit for bit.
    """
    pf = physical_fields(grid, coeffs)
    total = nonlinear_term(grid, pf)
    tam = taming_term(grid, tf, pf.y)
    if tam is not None:
        total = total - tam
    total = _project_pair(grid, total)
    if forcing is not None:
        total = total + forcing
    return total


@dataclass(frozen=True)
class RhsParts:
    """Additive pieces of ``dy/dt``; their sum is :meth:`total`."""

    linear: np.ndarray
    advective: np.ndarray
    taming: np.ndarray
    forcing: np.ndarray

    def total(self) -> np.ndarray:
        return self.linear + self.advective + self.taming + self.forcing

    def operator(self) -> np.ndarray:
        """``A(y)`` without the forcing."""
        return self.linear + self.advective + self.taming


def rhs_full(state: SpectralState, tf: TamingFunction | None, forcing: np.ndarray | None = None) -> RhsParts:
    grid = state.grid
    pf = physical_fields(grid, state.coeffs)
    adv = _project_pair(grid, nonlinear_term(grid, pf))
    tam = taming_term(grid, tf, pf.y)
    tam = np.zeros_like(state.coeffs) if tam is None else -_project_pair(grid, tam)
    frc = np.zeros_like(state.coeffs) if forcing is None else forcing
    return RhsParts(grid.laplacian(state.coeffs), adv, tam, frc)


def curl_identity_residual(grid: Grid, v_hat: np.ndarray, b_hat: np.ndarray) -> float:
    """Relative mismatch between ``(B.grad)v - (v.grad)B`` and ``curl(v x B)``."""
    lhs = advect(grid, b_hat, v_hat) - advect(grid, v_hat, b_hat)
    v = grid.to_physical(v_hat)
    b = grid.to_physical(b_hat)
    cross = grid.dealias(grid.to_fourier(np.cross(v, b, axis=0)))
    rhs = grid.curl(cross)
    scale = max(np.sqrt(grid.inner(lhs, lhs)), np.sqrt(grid.inner(rhs, rhs)))
    diff = lhs - rhs
    err = np.sqrt(grid.inner(diff, diff))
    return float(err / scale) if scale > 0 else float(err)


@dataclass(frozen=True)
class PressureFields:
    """Zero-mean pressure coefficients.

    ``p`` is the kinematic pressure, ``total`` the total pressure
    ``p + |B|^2/2`` (also shifted to zero mean) and ``pi`` the magnetic
    pressure that keeps the tamed induction equation divergence free.
    """

    p: np.ndarray
    pi: np.ndarray
    total: np.ndarray
    gauge: str = "zero-mean"


def _pressure_sources(grid: Grid, state: SpectralState, tf: TamingFunction | None):
    pf = physical_fields(grid, state.coeffs)
    v, b = pf.v, pf.b
    vec = _transport(v, pf.grad_v) - _transport(b, pf.grad_b)
    g = None if tf is None else tf.value(np.sum(pf.y**2, axis=0))
    if g is not None and not np.any(g):
        g = None
    if g is not None:
        vec = vec + g * v
    # grad |B|^2 / 2 = sum_k B_k grad B_k
    half_grad_b2 = np.einsum("k...,kj...->j...", b, pf.grad_b)
    total_src = grid.divergence(grid.dealias(grid.to_fourier(vec)))
    p_src = grid.divergence(grid.dealias(grid.to_fourier(vec - half_grad_b2)))
    if g is None:
        pi_src = np.zeros(grid.spectral_shape, dtype=complex)
    else:
        pi_src = grid.divergence(grid.dealias(grid.to_fourier(g * b)))
    return p_src, pi_src, total_src


def recover_pressures(state: SpectralState, tf: TamingFunction | None) -> PressureFields:
    grid = state.grid
    p_src, pi_src, total_src = _pressure_sources(grid, state, tf)
    return PressureFields(
        p=grid.solve_poisson(p_src),
        pi=grid.solve_poisson(pi_src),
        total=grid.solve_poisson(total_src),
    )


def pressure_residuals(
    state: SpectralState, tf: TamingFunction | None, pressures: PressureFields
) -> dict[str, float]:
    """Max grid residual of each Poisson equation."""
    grid = state.grid
    srcs = _pressure_sources(grid, state, tf)
    out = {}
    for name, q, src in zip(("p", "pi", "total"), (pressures.p, pressures.pi, pressures.total), srcs):
        out[name] = float(np.max(np.abs(grid.to_physical(grid.laplacian(q) - src))))
    return out


def weighted_gradients(grid: Grid, pf: PhysicalFields) -> dict[str, float]:
    """``|| |u| |grad w| ||_{L2}^2`` for the four pairings, Frobenius norm on gradients."""
    v2 = np.sum(pf.v**2, axis=0)
    b2 = np.sum(pf.b**2, axis=0)
    gv2 = np.sum(pf.grad_v**2, axis=(0, 1))
    gb2 = np.sum(pf.grad_b**2, axis=(0, 1))
    q = grid.quadrature
    return {
        "wg_vv": q(v2 * gv2),
        "wg_BB": q(b2 * gb2),
        "wg_vB": q(v2 * gb2),
        "wg_Bv": q(b2 * gv2),
    }


def a_pairing_h0(state: SpectralState, tf: TamingFunction | None) -> float:
    """``<A(y), y>`` computed from the assembled operator."""
    return state.grid.inner(rhs_full(state, tf).operator(), state.coeffs)


def pairing_h0_closed_form(state: SpectralState, tf: TamingFunction | None) -> float:
    """``-||grad y||^2 - int g_N(|y|^2) |y|^2`` by grid quadrature."""
    grid = state.grid
    pf = physical_fields(grid, state.coeffs)
    grad_sq = grid.quadrature(np.sum(pf.grad**2, axis=(0, 1)))
    tam = 0.0
    if tf is not None:
        r = np.sum(pf.y**2, axis=0)
        tam = grid.quadrature(tf.value(r) * r)
    return -grad_sq - tam


def a_pairing_h1(state: SpectralState, tf: TamingFunction | None) -> float:
    """``<A(y), (I - Lap) y>``."""
    grid = state.grid
    c = state.coeffs
    return grid.inner(rhs_full(state, tf).operator(), c - grid.laplacian(c))


def main_estimate_bound(state: SpectralState, tf: TamingFunction) -> float:
    """Upper bound on ``<A(y), (I - Lap) y>`` in terms of Sobolev norms.

    ``-||y||_{H2}^2 / 2 + ||y||^2 + 2 (N + 1) ||grad y||^2`` minus the four
    weighted-gradient terms.
    """
    grid = state.grid
    c = state.coeffs
    pf = physical_fields(grid, c)
    h0 = grid.sobolev_sq(c, 0)
    grad_sq = grid.sobolev_sq(c, 1) - h0
    h2 = grid.sobolev_sq(c, 2)
    wg = sum(weighted_gradients(grid, pf).values())
    return -0.5 * h2 + h0 + 2.0 * (tf.threshold + 1.0) * grad_sq - wg
