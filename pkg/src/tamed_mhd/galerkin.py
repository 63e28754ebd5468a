"""Finite-dimensional Galerkin reduction in an orthonormal divergence-free basis.

Basis elements are real Fourier modes ``a cos(k.x)`` and ``a sin(k.x)`` with
``a`` one of two unit polarisations orthogonal to ``k``, placed in either the
velocity or the magnetic slot, and normalised in ``H^1``.  Only wavevectors
inside the dealiased band are used.  Ordering is by ``|k|``, then
lexicographic ``k``, then the polarisation index (slot, polarisation,
cos/sin).  The six constant fields come last: they carry the spatial mean
that the taming term generates, and placing them after the oscillating
modes keeps the lowest shell at the front of the ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .operators import rhs_full
from .spectral import Grid, SpectralState
from .taming import TamingFunction
from .timestepper import BlowUpError

__all__ = [
    "GalerkinBasis",
    "GalerkinSystem",
    "available_modes",
    "build_basis",
    "drift",
    "integrate_galerkin",
]


def _representatives(grid: Grid) -> list[tuple[int, int, int]]:
    """One wavevector per ``+-k`` pair inside the dealiased band, sorted."""
    cut = int(np.floor(grid.n / 3.0))
    reps = []
    for m in product(range(-cut, cut + 1), repeat=3):
        if m == (0, 0, 0):
            continue
        # keep the member whose first nonzero component is positive
        first = next(c for c in m if c != 0)
        if first > 0:
            reps.append(m)
    reps.sort(key=lambda m: (m[0] ** 2 + m[1] ** 2 + m[2] ** 2, m))
    return reps


def available_modes(grid: Grid) -> int:
    return 8 * len(_representatives(grid)) + 6


def _polarisations(m: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(m, dtype=float)
    khat = k / np.linalg.norm(k)
    axis = int(np.argmin(np.abs(k)))
    e = np.zeros(3)
    e[axis] = 1.0
    a1 = e - np.dot(e, khat) * khat
    a1 /= np.linalg.norm(a1)
    a2 = np.cross(khat, a1)
    return a1, a2


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    """Basis coefficients ``elements[i]`` of shape ``(6, n, n, n//2+1)``."""

    grid: Grid
    elements: np.ndarray
    labels: tuple[tuple[tuple[int, int, int], int], ...]

    def __len__(self) -> int:
        return self.elements.shape[0]

    @property
    def h1_weight(self) -> np.ndarray:
        g = self.grid
        return g.volume * g.half_weights * (1.0 + g.k_squared)

    def pair_h1(self, coeffs: np.ndarray) -> np.ndarray:
        """``<coeffs, e_i>_{H1}`` for every basis element."""
        flat = (self.h1_weight * coeffs).reshape(-1)
        return (self.elements.reshape(len(self), -1).conj() @ flat).real

    def gram(self) -> np.ndarray:
        flat = self.elements.reshape(len(self), -1)
        weighted = (self.h1_weight * self.elements).reshape(len(self), -1)
        return (flat.conj() @ weighted.T).real

    def reconstruct(self, z: np.ndarray) -> SpectralState:
        coeffs = np.tensordot(np.asarray(z, dtype=float), self.elements, axes=(0, 0))
        return SpectralState(self.grid, coeffs)

    def element(self, i: int) -> SpectralState:
        return SpectralState(self.grid, self.elements[i].copy())


def build_basis(grid: Grid, n_modes: int) -> GalerkinBasis:
    total = available_modes(grid)
    if not 1 <= n_modes <= total:
        raise ValueError(f"n_modes must be in [1, {total}] on an n={grid.n} grid, got {n_modes}")
    k0 = grid.base_wavenumber
    x = grid.mesh
    elements = []
    labels = []
    for m in _representatives(grid):
        phase = k0 * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2])
        ksq = k0**2 * (m[0] ** 2 + m[1] ** 2 + m[2] ** 2)
        norm = np.sqrt((1.0 + ksq) * grid.volume / 2.0)
        cos_part, sin_part = np.cos(phase) / norm, np.sin(phase) / norm
        pols = _polarisations(m)
        index = 0
        for slot in (0, 3):
            for a in pols:
                for wave in (cos_part, sin_part):
                    fields = np.zeros((6, *grid.physical_shape))
                    fields[slot : slot + 3] = a[:, None, None, None] * wave
                    elements.append(grid.to_fourier(fields))
                    labels.append((m, index))
                    index += 1
                    if len(elements) == n_modes:
                        return GalerkinBasis(grid, np.array(elements), tuple(labels))
    for index in range(6):
        fields = np.zeros((6, *grid.physical_shape))
        fields[index] = 1.0 / np.sqrt(grid.volume)
        elements.append(grid.to_fourier(fields))
        labels.append(((0, 0, 0), index))
        if len(elements) == n_modes:
            break
    return GalerkinBasis(grid, np.array(elements), tuple(labels))


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """The ODE ``z' = b(z) + f_n`` with ``b(z)_i = <A(z.e), e_i>_{H1}``."""

    basis: GalerkinBasis
    tf: TamingFunction | None
    forcing: np.ndarray | None = None

    def forcing_projection(self) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(len(self.basis))
        return self.basis.pair_h1(self.forcing)

    def coefficients(self, state: SpectralState) -> np.ndarray:
        return self.basis.pair_h1(state.coeffs)

    def reconstruct(self, z: np.ndarray) -> SpectralState:
        return self.basis.reconstruct(z)

    def rhs(self, z: np.ndarray) -> np.ndarray:
        return drift(self, z) + self.forcing_projection()


def drift(system: GalerkinSystem, z: np.ndarray) -> np.ndarray:
    state = system.basis.reconstruct(z)
    return system.basis.pair_h1(rhs_full(state, system.tf).operator())


def integrate_galerkin(
    system: GalerkinSystem, z0: np.ndarray, t_end: float, dt: float = 1e-3
) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 with fixed step; the last step is shortened to hit ``t_end``.

    Returns the sample times and the coefficient trajectory ``(steps+1, n)``.
    """
    if not dt > 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    f_n = system.forcing_projection()

    def rhs(z: np.ndarray) -> np.ndarray:
        return drift(system, z) + f_n

    z = np.asarray(z0, dtype=float).copy()
    times = [0.0]
    traj = [z.copy()]
    t = 0.0
    while t < t_end:
        h = dt
        landing = t_end - t <= h * (1.0 + 1e-6)
        if landing:
            h = t_end - t
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1)
        k3 = rhs(z + 0.5 * h * k2)
        k4 = rhs(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise BlowUpError(t + h)
        t = t_end if landing else t + h
        times.append(t)
        traj.append(z.copy())
    return np.array(times), np.array(traj)
