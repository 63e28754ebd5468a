"""Initial data and forcing presets.

Every preset is returned dealiased and Leray-projected so runs start inside
the band where the discrete energy balance is exact.
"""

from __future__ import annotations

import numpy as np

from .spectral import Grid, SpectralState, random_solenoidal

__all__ = ["INITIAL_KINDS", "FORCING_KINDS", "initial_state", "forcing_field"]

INITIAL_KINDS = ("zero", "constant", "taylor_green", "orszag_tang_3d", "abc", "random_band", "file")
FORCING_KINDS = ("none", "taylor_green", "abc", "constant")


def _taylor_green(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x, y, z = (c * grid.base_wavenumber for c in grid.coordinates)
    shape = grid.physical_shape
    v = np.stack(np.broadcast_arrays(
        np.sin(x) * np.cos(y) * np.cos(z),
        -np.cos(x) * np.sin(y) * np.cos(z),
        np.zeros(shape),
    ))
    b = np.stack(np.broadcast_arrays(
        np.cos(x) * np.sin(y) * np.sin(z),
        np.sin(x) * np.cos(y) * np.sin(z),
        -2.0 * np.sin(x) * np.sin(y) * np.cos(z),
    ))
    return v, b


def _orszag_tang(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x, y, z = (c * grid.base_wavenumber for c in grid.coordinates)
    zero = np.zeros(grid.physical_shape)
    v = np.stack(np.broadcast_arrays(-2.0 * np.sin(y), 2.0 * np.sin(x), zero))
    b = 0.8 * np.stack(np.broadcast_arrays(
        -2.0 * np.sin(2.0 * y) + np.sin(z),
        2.0 * np.sin(x) + np.sin(z),
        np.sin(x) + np.sin(y),
    ))
    return v, b


def _abc(grid: Grid) -> np.ndarray:
    x, y, z = (c * grid.base_wavenumber for c in grid.coordinates)
    return np.stack(np.broadcast_arrays(
        np.sin(z) + np.cos(y),
        np.sin(x) + np.cos(z),
        np.sin(y) + np.cos(x),
    ))


def initial_state(
    grid: Grid,
    kind: str,
    amplitude: float = 1.0,
    seed: int = 0,
    k_max: float = 4.0,
    path: str | None = None,
    magnetic_ratio: float = 0.5,
) -> SpectralState:
    """Build a preset initial state.

    ``amplitude`` scales the whole field.  For ``taylor_green`` the magnetic
    part is the matching divergence-free pattern scaled by ``magnetic_ratio``;
    for ``random_band`` it is the pointwise maximum of ``|y|``.
    """
    if kind == "zero":
        return SpectralState.zeros(grid)
    if kind == "constant":
        # uniform state (1, 0, 0, 0, 1, 0) scaled by amplitude
        y = np.zeros((6, *grid.physical_shape))
        y[0] = amplitude
        y[4] = amplitude
        return SpectralState.from_physical(grid, y)
    if kind == "taylor_green":
        v, b = _taylor_green(grid)
        state = SpectralState.from_fields(grid, amplitude * v, amplitude * magnetic_ratio * b)
    elif kind == "orszag_tang_3d":
        v, b = _orszag_tang(grid)
        state = SpectralState.from_fields(grid, amplitude * v, amplitude * b)
    elif kind == "abc":
        u = _abc(grid)
        state = SpectralState.from_fields(grid, amplitude * u, amplitude * magnetic_ratio * u)
    elif kind == "random_band":
        rng = np.random.default_rng(np.uint64(seed))
        return SpectralState(grid, random_solenoidal(grid, rng, k_max, amplitude))
    elif kind == "file":
        if not path:
            raise ValueError("initial kind 'file' requires a path")
        from .io import load_snapshot

        snap = load_snapshot(path)
        if snap.grid != grid:
            raise ValueError(f"snapshot grid n={snap.grid.n}, L={snap.grid.length} does not match run grid")
        state = SpectralState.from_physical(grid, snap.fields).replace(t=0.0)
    else:
        raise ValueError(f"unknown initial condition {kind!r}; expected one of {INITIAL_KINDS}")
    return state.project()


def forcing_field(grid: Grid, kind: str, amplitude: float = 1.0) -> np.ndarray | None:
    """Time-independent projected forcing coefficients, or ``None`` for no forcing."""
    if kind == "none" or amplitude == 0:
        return None
    if kind == "taylor_green":
        v, b = _taylor_green(grid)
        fields = np.concatenate([v, 0.0 * b])
    elif kind == "abc":
        u = _abc(grid)
        fields = np.concatenate([u, u])
    elif kind == "constant":
        fields = np.zeros((6, *grid.physical_shape))
        fields[0] = 1.0
    else:
        raise ValueError(f"unknown forcing {kind!r}; expected one of {FORCING_KINDS}")
    return SpectralState.from_physical(grid, amplitude * fields).project().coeffs
