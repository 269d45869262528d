"""Periodic grid, FFT transforms and spectral operators on the torus [0,L)^d.

Fields are plain numpy arrays whose *last* ``d`` axes are the spatial axes;
any leading axes are tensor components and are transformed in one batched
call.  Complex fields use complex128 throughout; real fields stay float64 and
are transformed with the real-input FFT where it matters for speed.

Conventions
-----------
* frequency lattice: ``xi = (2*pi/L) * k`` with ``k in {-n/2, ..., n/2-1}``
  per axis (numpy fft ordering).
* normalized coefficients ``fhat = fft(f) * L**(d/2) / n**d`` satisfy
  Plancherel: ``sum |fhat|^2 = sum |f|^2 * dx^d`` (the discrete L^2 norm).
* the value-at-infinity normalizations of the continuum problem become
  zero-mode conventions here: inverse_laplacian and all gauge solves zero
  the k = 0 mode.
* dealiasing follows the 2/3 rule: modes with ``|k_i| > floor(n * frac / 2)``
  on any axis are discarded after pointwise products.

All operations are pure functions of immutable inputs and are safe to call
concurrently; FFTs parallelize internally up to SMCF_THREADS workers.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import fft as _sfft

from .errors import InvalidDimension, InvalidResolution, ConfigError

__all__ = ["GridSpec", "Grid", "make_grid"]


_WORKERS_CACHE: int | None = None


def _fft_workers() -> int:
    global _WORKERS_CACHE
    if _WORKERS_CACHE is None:
        env = os.environ.get("SMCF_THREADS")
        if env:
            try:
                _WORKERS_CACHE = max(1, int(env))
            except ValueError:
                _WORKERS_CACHE = max(1, os.cpu_count() or 1)
        else:
            _WORKERS_CACHE = max(1, os.cpu_count() or 1)
    return _WORKERS_CACHE


@dataclass(frozen=True)
class GridSpec:
    """Static description of the periodic grid."""

    d: int
    n: int
    box_length: float
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.d < 1:
            raise InvalidDimension(f"need d >= 1, got {self.d}")
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise InvalidResolution(f"n must be a power of two >= 4, got {self.n}")
        if not (self.box_length > 0):
            raise ConfigError(f"box_length must be positive, got {self.box_length}")
        if not (0 < self.dealias_fraction <= 1):
            raise ConfigError("dealias_fraction must lie in (0, 1]")

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def npoints(self) -> int:
        return self.n**self.d

    @property
    def dx(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def volume(self) -> float:
        return self.box_length**self.d

    @property
    def j_min(self) -> int:
        """Smallest Littlewood-Paley shell index resolved by the lattice."""
        return math.floor(math.log2(2 * math.pi / self.box_length))

    @property
    def j_max(self) -> int:
        """Largest Littlewood-Paley shell index (per-axis Nyquist scale)."""
        return math.ceil(math.log2(math.pi * self.n / self.box_length))


class Grid:
    """Runtime companion of :class:`GridSpec` carrying cached multipliers."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.d = spec.d
        self.n = spec.n
        self.L = spec.box_length
        self.shape = spec.shape

    # -- cached lattice data -------------------------------------------------

    @cached_property
    def x1d(self) -> np.ndarray:
        return np.arange(self.n) * self.spec.dx

    @cached_property
    def xi1d(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.spec.dx)

    def coords(self, axis: int) -> np.ndarray:
        """Physical coordinate along ``axis`` broadcast to the grid shape."""
        sh = [1] * self.d
        sh[axis] = self.n
        return self.x1d.reshape(sh)

    def xi(self, axis: int) -> np.ndarray:
        sh = [1] * self.d
        sh[axis] = self.n
        return self.xi1d.reshape(sh)

    @cached_property
    def xi_sq(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for a in range(self.d):
            out = out + self.xi(a) ** 2
        return out

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def k_cut(self) -> int:
        return int(math.floor(self.n * self.spec.dealias_fraction / 2))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        k1 = np.fft.fftfreq(self.n, d=1.0 / self.n)  # integer wavenumbers
        keep1 = np.abs(k1) <= self.k_cut
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.d):
            sh = [1] * self.d
            sh[a] = self.n
            mask &= keep1.reshape(sh)
        return mask

    @cached_property
    def _nyquist_free(self) -> np.ndarray:
        """Per-axis multiplier zeroing the unmatched k = -n/2 mode."""
        k1 = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.abs(k1 + self.n / 2) > 0.5

    # -- transforms ----------------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.d, 0))
        return _sfft.fftn(f, axes=axes, workers=_fft_workers())

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.d, 0))
        return _sfft.ifftn(fh, axes=axes, workers=_fft_workers())

    def fftr(self, f: np.ndarray) -> np.ndarray:
        """fft of a real field; returned full-size (convenience over rfft)."""
        return self.fft(f.astype(np.complex128, copy=False))

    def spectral(self, f: np.ndarray) -> np.ndarray:
        """Normalized coefficients satisfying discrete Plancherel."""
        return self.fft(f) * (self.L ** (self.d / 2) / self.spec.npoints)

    # -- norms ---------------------------------------------------------------

    def l2(self, f: np.ndarray) -> float:
        """Discrete L^2(torus) norm, summed over any component axes."""
        return float(np.sqrt(np.sum(np.abs(f) ** 2) * self.spec.cell_volume))

    def linf(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(f))) if f.size else 0.0

    @lru_cache(maxsize=32)
    def _sob_weight(self, sigma: float, homogeneous: bool) -> np.ndarray:
        if homogeneous:
            with np.errstate(divide="ignore"):
                w = np.where(self.xi_sq > 0, self.xi_sq, 1.0) ** sigma
            return np.where(self.xi_sq > 0, w, 0.0)
        return (1.0 + self.xi_sq) ** sigma

    def sobolev_norm(self, f: np.ndarray, sigma: float, homogeneous: bool = False,
                     space: str = "phys") -> float:
        """H^sigma norm: weights <xi>^sigma, or |xi|^sigma with k=0 dropped.

        Component axes (leading) are summed in quadrature.
        """
        fh = self.spectral(f) if space == "phys" else np.asarray(f)
        mag2 = np.abs(fh) ** 2
        if mag2.ndim > self.d:
            mag2 = mag2.reshape((-1,) + self.shape).sum(axis=0)
        w = self._sob_weight(float(sigma), bool(homogeneous))
        return float(np.sqrt(np.sum(w * mag2)))

    # -- differential operators ----------------------------------------------

    def deriv(self, f: np.ndarray, axis: int, order: int = 1,
              space: str = "phys") -> np.ndarray:
        """order-th spectral derivative along a spatial axis.

        Odd orders zero the unmatched Nyquist mode.
        """
        if not (0 <= axis < self.d):
            raise ConfigError(f"axis {axis} out of range for d={self.d}")
        if order < 1:
            raise ConfigError("order must be >= 1")
        mult = (1j * self.xi(axis)) ** order
        if order % 2 == 1:
            sh = [1] * self.d
            sh[axis] = self.n
            mult = mult * self._nyquist_free.reshape(sh)
        fh = self.fft(f) if space == "phys" else f
        out = self.ifft(mult * fh)
        if space == "phys" and np.isrealobj(f):
            return out.real
        return out

    @cached_property
    def _grad_mults(self) -> np.ndarray:
        mults = np.empty((self.d,) + self.shape, dtype=np.complex128)
        for a in range(self.d):
            sh = [1] * self.d
            sh[a] = self.n
            mults[a] = 1j * self.xi(a) * self._nyquist_free.reshape(sh)
        return mults

    def grad(self, f: np.ndarray, fh: np.ndarray | None = None) -> np.ndarray:
        """All first derivatives, stacked on a new leading axis (d, ...)."""
        if fh is None:
            fh = self.fft(f)
        lead = fh.shape[: fh.ndim - self.d]
        mults = self._grad_mults.reshape((self.d,) + (1,) * len(lead) + self.shape)
        out = self.ifft(mults * fh[None])
        if np.isrealobj(f):
            return out.real
        return out

    def second_derivs(self, f: np.ndarray, fh: np.ndarray | None = None) -> np.ndarray:
        """All second derivatives d_a d_b f, shape (d, d, ...); symmetric."""
        if fh is None:
            fh = self.fft(f)
        lead = fh.shape[: fh.ndim - self.d]
        pairs = [(a, b) for a in range(self.d) for b in range(a, self.d)]
        mults = np.empty((len(pairs),) + self.shape, dtype=np.complex128)
        for i, (a, b) in enumerate(pairs):
            mults[i] = -self.xi(a) * self.xi(b)
        mults = mults.reshape((len(pairs),) + (1,) * len(lead) + self.shape)
        packed = self.ifft(mults * fh[None])
        if np.isrealobj(f):
            packed = packed.real
        out = np.empty((self.d, self.d) + fh.shape, dtype=packed.dtype)
        for i, (a, b) in enumerate(pairs):
            out[a, b] = packed[i]
            out[b, a] = packed[i]
        return out

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        out = self.ifft(-self.xi_sq * self.fft(f))
        return out.real if np.isrealobj(f) else out

    def inverse_laplacian(self, f: np.ndarray, space: str = "phys") -> np.ndarray:
        """Solve Delta u = f with the zero mode of u set to 0."""
        fh = self.fft(f) if space == "phys" else f.copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            uh = fh / (-self.xi_sq)
        zero = (slice(None),) * (fh.ndim - self.d) + (0,) * self.d
        uh = np.where(self.xi_sq > 0, uh, 0.0)
        uh[zero] = 0.0
        if space == "spec":
            return uh
        out = self.ifft(uh)
        return out.real if np.isrealobj(f) else out

    # -- dealiasing ----------------------------------------------------------

    def dealias(self, f: np.ndarray, space: str = "phys") -> np.ndarray:
        """2/3-rule spectral truncation."""
        if space == "spec":
            return f * self.dealias_mask
        out = self.ifft(self.fft(f) * self.dealias_mask)
        return out.real if np.isrealobj(f) else out

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pointwise product followed by 2/3 truncation."""
        return self.dealias(a * b)

    def zero_mean(self, f: np.ndarray) -> np.ndarray:
        """Remove the k = 0 mode."""
        axes = tuple(range(-self.d, 0))
        return f - f.mean(axis=axes, keepdims=True)

    # -- interpolation ---------------------------------------------------------

    def interpolate(self, f: np.ndarray, points: np.ndarray,
                    chunk: int = 2048) -> np.ndarray:
        """Evaluate the trigonometric interpolant of ``f`` at off-grid points.

        ``points`` has shape (P, d); values are wrapped into the box.  Exact
        for band-limited (dealiased) data.  Component axes are preserved:
        result shape is f.shape[:-d] + (P,).
        """
        pts = np.asarray(points, dtype=float).reshape(-1, self.d) % self.L
        comps = f.reshape((-1,) + self.shape)
        coeff = self.fft(comps) / self.spec.npoints

        # compress each axis to its populated modes to cut the contraction cost
        tol = 1e-300
        keep = []
        for a in range(self.d):
            axes = tuple(i for i in range(1, self.d + 1) if i != a + 1)
            mass = np.abs(coeff).max(axis=(0,) + axes)
            keep.append(np.nonzero(mass > tol)[0])
        sl = np.ix_(np.arange(coeff.shape[0]), *keep)
        coeff = coeff[sl]
        xis = [self.xi1d[idx] for idx in keep]

        P = pts.shape[0]
        out = np.empty((coeff.shape[0], P), dtype=np.complex128)
        for lo in range(0, P, chunk):
            hi = min(lo + chunk, P)
            block = pts[lo:hi]
            cur = None
            for a in range(self.d):
                E = np.exp(1j * np.outer(block[:, a], xis[a]))  # (p, m_a)
                if a == 0:
                    # (c, m0, rest) x (p, m0) -> (c, p, rest)
                    cur = np.tensordot(E, coeff, axes=([1], [1]))  # (p, c, rest)
                    cur = np.moveaxis(cur, 0, 1)  # (c, p, rest...)
                else:
                    cur = np.einsum("cpm...,pm->cp...", cur, E)
            out[:, lo:hi] = cur
        return out.reshape(f.shape[: f.ndim - self.d] + (P,))


def make_grid(d: int, n: int, box_length: float,
              dealias_fraction: float = 2.0 / 3.0) -> Grid:
    """Build a grid; validates dimension/resolution and fixes the lattice."""
    return Grid(GridSpec(d=d, n=n, box_length=float(box_length),
                         dealias_fraction=dealias_fraction))


def sym_index_pairs(d: int) -> list:
    """Upper-triangular index pairs (a, b), a <= b, in row-major order."""
    return [(a, b) for a in range(d) for b in range(a, d)]


def sym_pack(T: np.ndarray, d: int) -> np.ndarray:
    """Pack the two leading symmetric axes (d, d, ...) -> (d(d+1)/2, ...)."""
    return np.stack([T[a, b] for a, b in sym_index_pairs(d)])


def sym_unpack(P: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`sym_pack`."""
    out = np.empty((d, d) + P.shape[1:], dtype=P.dtype)
    for i, (a, b) in enumerate(sym_index_pairs(d)):
        out[a, b] = P[i]
        out[b, a] = P[i]
    return out
