"""Spectral core on the periodic cube.

Fields are stored as real-FFT coefficients normalised so that a constant
``c`` maps to the zero mode ``c`` and ``sin x`` maps to ``-i/2`` at ``k = 1``.
With this normalisation ``||u||_{L2}^2 = L^3 * sum |u_k|^2`` over the full
spectrum; the half spectrum is summed with weight 2 off the self-conjugate
``kz = 0`` and ``kz = n/2`` planes.

Derivative multipliers use ``i k`` with the Nyquist wavenumber set to zero,
and the Leray projector is built from the same wavevector, so spectral
divergences of projected fields vanish to round-off.  The Laplacian uses the
true ``|k|^2``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

__all__ = [
    "Grid",
    "SpectralState",
    "NormReport",
    "fft_workers",
    "random_solenoidal",
]


def fft_workers() -> int:
    """Worker count for scipy.fft, read from ``TMHD_THREADS`` (default 1)."""
    raw = os.environ.get("TMHD_THREADS", "1").strip()
    try:
        value = int(raw)
    except ValueError:
        return 1
    if value <= 0:
        return os.cpu_count() or 1
    return value


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid of ``n`` points per axis on ``[0, L)^3``."""

    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"points per axis must be an even integer >= 4, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"box length must be positive, got {self.length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and self.n == other.n and self.length == other.length

    def __hash__(self) -> int:
        return hash((self.n, self.length))

    # ---------------------------------------------------------------- geometry

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def volume(self) -> float:
        return self.length**3

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def base_wavenumber(self) -> float:
        return 2.0 * np.pi / self.length

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable 1D coordinate arrays ``(x, y, z)``."""
        x = np.arange(self.n) * self.dx
        return x[:, None, None], x[None, :, None], x[None, None, :]

    @cached_property
    def mesh(self) -> np.ndarray:
        """Full coordinate mesh of shape ``(3, n, n, n)``."""
        x, y, z = self.coordinates
        return np.stack(np.broadcast_arrays(x, y, z))

    # ------------------------------------------------------------- wavenumbers

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer mode indices, broadcastable to the spectral shape."""
        m = np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)
        mz = np.arange(self.n // 2 + 1)
        return m[:, None, None], m[None, :, None], mz[None, None, :]

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical wavevector components (true values, Nyquist included)."""
        k0 = self.base_wavenumber
        return tuple(k0 * m.astype(float) for m in self.mode_index)

    @cached_property
    def derivative_wavevector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavevector used by first-derivative multipliers (Nyquist zeroed)."""
        out = []
        for m, k in zip(self.mode_index, self.wavevector):
            out.append(np.where(np.abs(m) == self.n // 2, 0.0, k))
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavevector
        return kx**2 + ky**2 + kz**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep a mode iff every ``|k_i| <= n/3``."""
        cut = self.n / 3.0
        mx, my, mz = self.mode_index
        return (np.abs(mx) <= cut) & (np.abs(my) <= cut) & (np.abs(mz) <= cut)

    @cached_property
    def half_weights(self) -> np.ndarray:
        """Multiplicity of each stored half-spectrum mode in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w[None, None, :], self.spectral_shape)

    @cached_property
    def _leray_data(self) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
        kx, ky, kz = np.broadcast_arrays(*self.derivative_wavevector)
        ksq = kx**2 + ky**2 + kz**2
        inv = np.zeros_like(ksq)
        np.divide(1.0, ksq, out=inv, where=ksq > 0)
        return (kx, ky, kz), inv

    # ------------------------------------------------------------- transforms

    def to_fourier(self, u: np.ndarray) -> np.ndarray:
        """Forward transform over the last three axes."""
        u = np.asarray(u, dtype=float)
        if u.shape[-3:] != self.physical_shape:
            raise ValueError(f"expected trailing shape {self.physical_shape}, got {u.shape}")
        return sfft.rfftn(u, axes=(-3, -2, -1), norm="forward", workers=fft_workers())

    def to_physical(self, u_hat: np.ndarray) -> np.ndarray:
        """Inverse transform over the last three axes."""
        u_hat = np.asarray(u_hat)
        if u_hat.shape[-3:] != self.spectral_shape:
            raise ValueError(f"expected trailing shape {self.spectral_shape}, got {u_hat.shape}")
        return sfft.irfftn(
            u_hat, s=self.physical_shape, axes=(-3, -2, -1), norm="forward", workers=fft_workers()
        )

    # ------------------------------------------------------------ derivatives

    def gradient(self, f_hat: np.ndarray) -> np.ndarray:
        """Gradient of a scalar (or of each component of a stack), new leading axis."""
        return np.stack([1j * k * f_hat for k in self.derivative_wavevector], axis=-4)

    def divergence(self, u_hat: np.ndarray) -> np.ndarray:
        kx, ky, kz = self.derivative_wavevector
        return 1j * (kx * u_hat[..., 0, :, :, :] + ky * u_hat[..., 1, :, :, :] + kz * u_hat[..., 2, :, :, :])

    def curl(self, u_hat: np.ndarray) -> np.ndarray:
        kx, ky, kz = self.derivative_wavevector
        ux, uy, uz = u_hat[..., 0, :, :, :], u_hat[..., 1, :, :, :], u_hat[..., 2, :, :, :]
        return 1j * np.stack([ky * uz - kz * uy, kz * ux - kx * uz, kx * uy - ky * ux], axis=-4)

    def laplacian(self, u_hat: np.ndarray) -> np.ndarray:
        return -self.k_squared * u_hat

    def leray(self, u_hat: np.ndarray) -> np.ndarray:
        """Project vector fields (component axis ``-4``) onto divergence-free fields."""
        (kx, ky, kz), inv = self._leray_data
        ux, uy, uz = u_hat[..., 0, :, :, :], u_hat[..., 1, :, :, :], u_hat[..., 2, :, :, :]
        kdotu = (kx * ux + ky * uy + kz * uz) * inv
        return np.stack([ux - kx * kdotu, uy - ky * kdotu, uz - kz * kdotu], axis=-4)

    def dealias(self, u_hat: np.ndarray) -> np.ndarray:
        return u_hat * self.dealias_mask

    def solve_poisson(self, source_hat: np.ndarray) -> np.ndarray:
        """Zero-mean solution of ``Lap q = source``."""
        (_, _, _), inv = self._leray_data
        return -source_hat * inv

    def pad(self, u_hat: np.ndarray, target: "Grid") -> np.ndarray:
        """Zero-pad coefficients onto a finer grid of the same box.

        Nyquist modes of the source are dropped, so the padded field is
        exactly the trigonometric interpolant of the band-limited part.
        """
        if target.length != self.length or target.n < self.n:
            raise ValueError("target grid must cover the same box with at least as many points")
        half = self.n // 2
        keep = np.r_[0:half, self.n - half + 1 : self.n]
        dest = np.r_[0:half, target.n - half + 1 : target.n]
        out = np.zeros((*u_hat.shape[:-3], *target.spectral_shape), dtype=complex)
        out[..., dest[:, None, None], dest[None, :, None], np.arange(half)[None, None, :]] = u_hat[
            ..., keep[:, None, None], keep[None, :, None], np.arange(half)[None, None, :]
        ]
        return out

    # ------------------------------------------------------------------ norms

    def inner(self, a_hat: np.ndarray, b_hat: np.ndarray) -> float:
        """``L2`` inner product, summed over every leading component."""
        prod = (a_hat * np.conj(b_hat)).real
        return float(self.volume * np.sum(prod * self.half_weights))

    def sobolev_sq(self, u_hat: np.ndarray, m: float) -> float:
        """Squared Bessel-potential norm ``||(I - Lap)^{m/2} u||^2``."""
        weight = self.half_weights * (1.0 + self.k_squared) ** m
        return float(self.volume * np.sum(np.abs(u_hat) ** 2 * weight))

    def quadrature(self, f: np.ndarray) -> float:
        """Rectangle-rule integral of a physical field over the box."""
        return float(np.sum(f) * self.cell_volume)

    def lp_norm(self, u: np.ndarray, p: float) -> float:
        """``L^p`` norm of the pointwise Euclidean length of a physical field stack."""
        if p < 1:
            raise ValueError(f"L^p norm requires p >= 1, got {p}")
        mag_sq = np.sum(np.asarray(u) ** 2, axis=tuple(range(u.ndim - 3))) if u.ndim > 3 else u**2
        if np.isinf(p):
            return float(np.sqrt(np.max(mag_sq)))
        return float((np.sum(mag_sq ** (p / 2.0)) * self.cell_volume) ** (1.0 / p))


@dataclass(frozen=True)
class NormReport:
    h0: float
    h1: float
    h2: float
    lp: dict[float, float] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SpectralState:
    """The pair ``(v, B)`` as a ``(6, n, n, n//2+1)`` coefficient array."""

    grid: Grid
    coeffs: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        expected = (6, *self.grid.spectral_shape)
        if self.coeffs.shape != expected:
            raise ValueError(f"state coefficients must have shape {expected}, got {self.coeffs.shape}")

    @classmethod
    def from_physical(cls, grid: Grid, fields: np.ndarray, t: float = 0.0) -> "SpectralState":
        return cls(grid, grid.to_fourier(fields), float(t))

    @classmethod
    def from_fields(cls, grid: Grid, v: np.ndarray, b: np.ndarray, t: float = 0.0) -> "SpectralState":
        return cls.from_physical(grid, np.concatenate([np.asarray(v), np.asarray(b)]), t)

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "SpectralState":
        return cls(grid, np.zeros((6, *grid.spectral_shape), dtype=complex), t)

    @property
    def v(self) -> np.ndarray:
        return self.coeffs[:3]

    @property
    def b(self) -> np.ndarray:
        return self.coeffs[3:]

    def physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)

    def replace(self, coeffs: np.ndarray | None = None, t: float | None = None) -> "SpectralState":
        return SpectralState(
            self.grid, self.coeffs if coeffs is None else coeffs, self.t if t is None else float(t)
        )

    def project(self) -> "SpectralState":
        """Dealias and Leray-project both fields."""
        g = self.grid
        c = g.dealias(self.coeffs)
        return self.replace(np.concatenate([g.leray(c[:3]), g.leray(c[3:])]))

    def divergence_max(self) -> tuple[float, float]:
        g = self.grid
        dv = g.to_physical(g.divergence(self.v))
        db = g.to_physical(g.divergence(self.b))
        return float(np.max(np.abs(dv))), float(np.max(np.abs(db)))

    def energy(self) -> float:
        return self.grid.inner(self.coeffs, self.coeffs)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def norms(self, ps: tuple[float, ...] = (4.0,)) -> NormReport:
        g = self.grid
        phys = self.physical() if ps else None
        return NormReport(
            h0=float(np.sqrt(g.sobolev_sq(self.coeffs, 0))),
            h1=float(np.sqrt(g.sobolev_sq(self.coeffs, 1))),
            h2=float(np.sqrt(g.sobolev_sq(self.coeffs, 2))),
            lp={float(p): g.lp_norm(phys, p) for p in ps},
        )


def random_solenoidal(
    grid: Grid,
    rng: np.random.Generator,
    k_max: float,
    amplitude: float,
    components: int = 6,
) -> np.ndarray:
    """Random divergence-free coefficients supported on ``0 < |m| <= k_max``.

    The result is scaled so that the pointwise maximum of the Euclidean
    length equals ``amplitude``.  ``k_max`` is in integer mode units and is
    clipped to the dealiased band.
    """
    if components % 3:
        raise ValueError("components must be a multiple of 3")
    noise = rng.standard_normal((components, *grid.physical_shape))
    c = grid.to_fourier(noise)
    mx, my, mz = grid.mode_index
    msq = mx**2 + my**2 + mz**2
    band = (msq > 0) & (msq <= k_max**2) & grid.dealias_mask
    c = c * band / np.sqrt(np.maximum(msq, 1)) ** 1.5
    c = np.concatenate([grid.leray(c[i : i + 3]) for i in range(0, components, 3)])
    peak = grid.lp_norm(grid.to_physical(c), np.inf)
    if peak == 0:
        return c
    return c * (amplitude / peak)
