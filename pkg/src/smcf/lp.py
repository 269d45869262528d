"""Littlewood-Paley projectors on the discrete frequency lattice.

The cutoff is the fixed smooth bump

    phi(r) = q(2 - r) / (q(2 - r) + q(r - 1)),   q(t) = exp(-1/t) [t > 0],

identically 1 on [0, 1] and supported in [0, 2].  Shell multipliers are
``phi_j(xi) = phi(|xi|/2^j) - phi(|xi|/2^(j-1))`` for ``j_min <= j < j_max``;
the top shell absorbs the remaining tail ``1 - phi(|xi|/2^(j_max-1))`` so the
partition of unity holds on every resolved lattice frequency (the corner
modes exceed the per-axis Nyquist scale 2^j_max by up to sqrt(d)).

Block multipliers follow the convention S_0 = sum_{j<=0} P_j (plus the zero
mode) and S_j = P_j for j > 0.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .grid import Grid

__all__ = ["cutoff_profile", "LPFamily", "lp_project"]


def _q(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff_profile(r: np.ndarray) -> np.ndarray:
    """Smooth radial profile: 1 on [0,1], 0 on [2,inf)."""
    r = np.abs(np.asarray(r, dtype=float))
    a = _q(2.0 - r)
    b = _q(r - 1.0)
    with np.errstate(invalid="ignore"):
        out = np.where(a + b > 0, a / np.where(a + b > 0, a + b, 1.0), 0.0)
    out[r <= 1.0] = 1.0
    return out


class LPFamily:
    """Shell and block Fourier multipliers attached to one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.j_min = grid.spec.j_min
        self.j_max = grid.spec.j_max

    @property
    def shells(self) -> range:
        return range(self.j_min, self.j_max + 1)

    @property
    def blocks(self) -> range:
        """Indices j >= 0 of the S_j decomposition."""
        return range(0, self.j_max + 1)

    @lru_cache(maxsize=None)
    def shell_multiplier(self, j: int) -> np.ndarray:
        """Multiplier of P_j; the top shell is lumped with all higher ones."""
        j = min(max(j, self.j_min), self.j_max)
        r = self.grid.xi_abs
        if j == self.j_max:
            out = 1.0 - cutoff_profile(r / 2.0 ** (j - 1))
            out[self.grid.xi_sq == 0] = 0.0
            return out
        return cutoff_profile(r / 2.0**j) - cutoff_profile(r / 2.0 ** (j - 1))

    @lru_cache(maxsize=None)
    def block_multiplier(self, j: int) -> np.ndarray:
        """Multiplier of S_j (S_0 includes everything at and below scale 1)."""
        j = min(max(j, 0), self.j_max)
        if j == 0:
            if self.j_max == 0:
                return np.ones(self.grid.shape)
            return cutoff_profile(self.grid.xi_abs)
        return self.shell_multiplier(j)

    @lru_cache(maxsize=None)
    def low_multiplier(self, j: int) -> np.ndarray:
        """Multiplier of S_{<=j} for j >= 0."""
        j = max(j, 0)
        if j >= self.j_max:
            return np.ones(self.grid.shape)
        return cutoff_profile(self.grid.xi_abs / 2.0**j)

    def project(self, f: np.ndarray, j: int, kind: str = "P",
                space: str = "phys") -> np.ndarray:
        g = self.grid
        if kind == "P":
            mult = self.shell_multiplier(j)
        elif kind == "S":
            mult = self.block_multiplier(j)
        elif kind == "S_leq":
            mult = self.low_multiplier(j)
        elif kind == "S_geq":
            mult = 1.0 - (self.low_multiplier(j - 1) if j >= 1 else 0.0)
        else:
            raise ValueError(f"unknown projector kind {kind!r}")
        if space == "spec":
            return f * mult
        out = g.ifft(g.fft(f) * mult)
        return out.real if np.isrealobj(f) else out


def lp_project(f: np.ndarray, family: LPFamily, j: int, kind: str = "P",
               space: str = "phys") -> np.ndarray:
    """Functional wrapper around :meth:`LPFamily.project`."""
    return family.project(f, j, kind, space)
