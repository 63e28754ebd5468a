"""Mild (integral) formulation and its Picard iteration.

The heat kernel, the Oseen kernel and its derivatives act as Fourier
multipliers.  Duhamel integrals use the trapezoid rule on uniform nodes and
are evaluated for all nodes at once through the recursion

    R_0 = F_0 / 2,   R_{i+1} = exp(h Lap) R_i + F_{i+1},   I_i = h (R_i - F_i / 2)

which reproduces the trapezoid sum ``sum_j w_j exp((t_i - s_j) Lap) F_j``.

The bilinear operator pairs its first argument with the derivative index:
``Bbar(u, w) = int exp((t-s) Lap) P div(u (x) w) ds``, the Duhamel form of
``(u.grad) w`` for divergence-free ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Grid, SpectralState
from .taming import TamingFunction

__all__ = [
    "KernelMultipliers",
    "MildConfig",
    "MildResult",
    "PicardDivergenceError",
    "heat_propagate",
    "duhamel",
    "conservative_advection",
    "bilinear_B",
    "mhd_B",
    "forcing_term",
    "picard_solve",
]


@dataclass(frozen=True)
class KernelMultipliers:
    grid: Grid

    def heat(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"heat kernel needs t >= 0, got {t}")
        return np.exp(-self.grid.k_squared * t)

    def oseen(self, u_hat: np.ndarray, t: float) -> np.ndarray:
        """Projected heat kernel applied to a vector field (component axis ``-4``)."""
        return self.heat(t) * self.grid.leray(u_hat)

    def derivative(self, m: int, t: float) -> np.ndarray:
        return 1j * self.grid.derivative_wavevector[m] * self.heat(t)


@dataclass(frozen=True)
class MildConfig:
    nodes: int = 64
    tolerance: float = 1e-10
    max_iterations: int = 20

    def __post_init__(self) -> None:
        if self.nodes < 8:
            raise ValueError(f"need at least 8 quadrature nodes, got {self.nodes}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class MildResult:
    """Trajectory on the quadrature nodes; ``coeffs[i]`` is the state at ``times[i]``."""

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray
    iterations: int
    increments: list[float]

    def state(self, i: int = -1) -> SpectralState:
        return SpectralState(self.grid, self.coeffs[i], float(self.times[i]))

    def at(self, t: float) -> SpectralState:
        """Linear interpolation between nodes."""
        if not self.times[0] <= t <= self.times[-1]:
            raise ValueError(f"t={t} outside [{self.times[0]}, {self.times[-1]}]")
        j = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        return SpectralState(self.grid, (1 - w) * self.coeffs[j] + w * self.coeffs[j + 1], t)


class PicardDivergenceError(RuntimeError):
    """Picard iteration did not reach the tolerance within the iteration budget."""

    def __init__(self, iterations: int, increment: float):
        super().__init__(
            f"Picard iteration not converged after {iterations} iterations "
            f"(last relative increment {increment:.3e}); horizon or data too large"
        )
        self.iterations = iterations
        self.increment = increment


def heat_propagate(y0: SpectralState, t: float) -> SpectralState:
    return y0.replace(KernelMultipliers(y0.grid).heat(t) * y0.coeffs, y0.t + t)


def _uniform_step(times: np.ndarray) -> float:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2 or times[0] != 0.0:
        raise ValueError("sample times must be a 1D grid starting at 0")
    h = (times[-1] - times[0]) / (len(times) - 1)
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=0.0):
        raise ValueError("sample times must be uniform")
    return h


def duhamel(grid: Grid, samples: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Trapezoid Duhamel integral ``int_0^{t_i} exp((t_i - s) Lap) F(s) ds`` at every node."""
    if samples.shape[0] != len(times):
        raise ValueError(f"{samples.shape[0]} samples for {len(times)} nodes")
    h = _uniform_step(times)
    e = np.exp(-grid.k_squared * h)
    out = np.zeros_like(samples)
    running = 0.5 * samples[0]
    for i in range(1, len(times)):
        running = e * running + samples[i]
        out[i] = h * (running - 0.5 * samples[i])
    return out


def conservative_advection(grid: Grid, u_hat: np.ndarray, w_hat: np.ndarray) -> np.ndarray:
    """``P div(u (x) w)``: derivative of the dealiased products ``u_j w_k``, contracted on ``j``."""
    u = grid.to_physical(u_hat)
    w = grid.to_physical(w_hat)
    prods = grid.dealias(grid.to_fourier(u[:, None] * w[None, :]))
    kx, ky, kz = grid.derivative_wavevector
    div = 1j * (kx * prods[0] + ky * prods[1] + kz * prods[2])
    return grid.leray(div)


def _check_traj(u: np.ndarray, w: np.ndarray, times: np.ndarray) -> None:
    if u.shape != w.shape or u.shape[0] != len(times):
        raise ValueError("trajectories must share the quadrature sampling")


def bilinear_B(grid: Grid, u_traj: np.ndarray, w_traj: np.ndarray, times: np.ndarray) -> np.ndarray:
    """``Bbar(u, w)`` at every node for vector trajectories of shape ``(nodes, 3, ...)``."""
    _check_traj(u_traj, w_traj, times)
    samples = np.array([conservative_advection(grid, u, w) for u, w in zip(u_traj, w_traj)])
    return duhamel(grid, samples, times)


def _mhd_samples(grid: Grid, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    v1, b1, v2, b2 = y1[:3], y1[3:], y2[:3], y2[3:]
    top = conservative_advection(grid, v1, v2) - conservative_advection(grid, b1, b2)
    bottom = conservative_advection(grid, v1, b2) - conservative_advection(grid, b1, v2)
    return np.concatenate([top, bottom])


def mhd_B(grid: Grid, y1_traj: np.ndarray, y2_traj: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Block combination ``(Bbar(v1,v2) - Bbar(B1,B2), Bbar(v1,B2) - Bbar(B1,v2))`` at every node."""
    _check_traj(y1_traj, y2_traj, times)
    samples = np.array([_mhd_samples(grid, a, b) for a, b in zip(y1_traj, y2_traj)])
    return duhamel(grid, samples, times)


def _taming_sample(grid: Grid, y: np.ndarray, tf: TamingFunction | None, f: np.ndarray | None) -> np.ndarray:
    out = np.zeros_like(y) if f is None else -f
    if tf is not None:
        phys = grid.to_physical(y)
        g = tf.value(np.sum(phys**2, axis=0))
        if np.any(g):
            tam = grid.dealias(grid.to_fourier(g * phys))
            out = out + np.concatenate([grid.leray(tam[:3]), grid.leray(tam[3:])])
    return out


def forcing_term(
    grid: Grid,
    y_traj: np.ndarray,
    tf: TamingFunction | None,
    f: np.ndarray | None,
    times: np.ndarray,
) -> np.ndarray:
    """``exp(t Lap) y0 - int exp((t-s) Lap) P(g_N(|y|^2) y - f) ds`` at every node.

    ``f`` is a projected, time-independent coefficient array or ``None``.
    """
    _uniform_step(times)
    heat = np.array([np.exp(-grid.k_squared * t) * y_traj[0] for t in times])
    samples = np.array([_taming_sample(grid, y, tf, f) for y in y_traj])
    return heat - duhamel(grid, samples, times)


def picard_solve(
    y0: SpectralState,
    tf: TamingFunction | None,
    f: np.ndarray | None,
    t_end: float,
    cfg: MildConfig = MildConfig(),
) -> MildResult:
    """Iterate ``y <- f_N(y) - B(y, y)`` on ``cfg.nodes`` uniform intervals of ``[0, t_end]``.

    Converged when the sup-in-time ``L2`` change, relative to the sup-in-time
    norm of the iterate, drops below ``cfg.tolerance``.  Each sweep is done
    node by node so that only one trajectory is held in memory.
    """
    grid = y0.grid
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    times = np.linspace(0.0, t_end, cfg.nodes + 1)
    h = times[1] - times[0]
    e = np.exp(-grid.k_squared * h)
    heat = [np.exp(-grid.k_squared * t) for t in times]
    traj = np.array([hk * y0.coeffs for hk in heat])
    increments: list[float] = []

    for iteration in range(1, cfg.max_iterations + 1):
        diff_sup = 0.0
        norm_sup = 0.0
        running = None
        for i in range(len(times)):
            y = traj[i]
            sample = _mhd_samples(grid, y, y) + _taming_sample(grid, y, tf, f)
            if i == 0:
                running = 0.5 * sample
                new = y0.coeffs.copy()
            else:
                running = e * running + sample
                new = heat[i] * y0.coeffs - h * (running - 0.5 * sample)
            d = new - y
            diff_sup = max(diff_sup, grid.inner(d, d))
            norm_sup = max(norm_sup, grid.inner(new, new))
            traj[i] = new
        increment = float(np.sqrt(diff_sup / norm_sup)) if norm_sup > 0 else float(np.sqrt(diff_sup))
        increments.append(increment)
        if not np.isfinite(increment):
            raise PicardDivergenceError(iteration, increment)
        if increment < cfg.tolerance:
            return MildResult(grid, times, traj, iteration, increments)
    raise PicardDivergenceError(cfg.max_iterations, increments[-1])
