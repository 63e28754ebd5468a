"""Taming function and its primitive.

``g_N(r)`` vanishes for ``r <= N``, rises on ``[N, N+1]`` along the quartic
ramp ``h(s) = 2 s^3 - s^4`` (``s = r - N``) and continues linearly as
``2 (r - N - 1/2)``.  The ramp matches value, slope and curvature at both
ends, so ``g_N`` is ``C^2`` and ``0 <= g_N' <= 2`` everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TamingFunction"]


def _shifted(r: np.ndarray | float, threshold: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("taming function is defined for r >= 0 only")
    return np.clip(r - threshold, 0.0, None)


@dataclass(frozen=True)
class TamingFunction:
    """``g_N`` for threshold ``N``; evaluators accept scalars or arrays of ``r >= 0``."""

    threshold: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.threshold) or self.threshold < 0:
            raise ValueError(f"taming threshold must be finite and >= 0, got {self.threshold}")

    def value(self, r: np.ndarray | float) -> np.ndarray:
        s = _shifted(r, self.threshold)
        ramp = s**3 * (2.0 - s)
        return np.where(s < 1.0, ramp, 2.0 * (s - 0.5))

    def derivative(self, r: np.ndarray | float) -> np.ndarray:
        s = _shifted(r, self.threshold)
        return np.where(s < 1.0, 2.0 * s**2 * (3.0 - 2.0 * s), 2.0)

    def second_derivative(self, r: np.ndarray | float) -> np.ndarray:
        s = _shifted(r, self.threshold)
        return np.where(s < 1.0, 12.0 * s * (1.0 - s), 0.0)

    def primitive(self, r: np.ndarray | float) -> np.ndarray:
        """``G_N(r) = int_0^r g_N``."""
        s = _shifted(r, self.threshold)
        ramp = s**4 * (0.5 - 0.2 * s)
        return np.where(s < 1.0, ramp, (s - 0.5) ** 2 + 0.05)

    def apply(self, fields: np.ndarray) -> np.ndarray:
        """Pointwise ``g_N(|y|^2) y`` for a physical stack ``(6, n, n, n)``."""
        mag_sq = np.sum(fields**2, axis=0)
        return self.value(mag_sq) * fields

    def is_active(self, fields: np.ndarray) -> bool:
        return bool(np.max(np.sum(fields**2, axis=0)) > self.threshold)
