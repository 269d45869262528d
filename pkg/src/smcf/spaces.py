"""Computable local-energy norms, Sobolev-type norms and frequency envelopes.

These are diagnostics: they never enter the time stepping.  The dyadic cube
partitions Q_l use sharp indicator functions; the scale range is capped at
the box size, and on grids whose spacing is not a dyadic fraction of 1 the
cube sides snap to whole numbers of grid points (documented clamping).  The
Y_j norm is evaluated with the trivial single-term decomposition, which upper
bounds the variational definition; the atomic N norm is exposed only through
its l^1-cube upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .grid import Grid
from .lp import LPFamily

__all__ = [
    "TimeSeriesField",
    "FrequencyEnvelope",
    "x_norm",
    "l2xs_norm",
    "z_norm",
    "y_norm",
    "n_norm_upper_bound",
    "gauge_norm_hs",
    "frequency_envelope",
]


@dataclass
class TimeSeriesField:
    """Snapshots of one (possibly tensor-valued) field on a shared grid.

    ``data`` has shape (T, *components, *spatial).
    """

    grid: Grid
    times: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size != self.data.shape[0]:
            raise ConfigError("times must be 1-d and match data's first axis")
        if self.times.size >= 2 and not np.all(np.diff(self.times) > 0):
            raise ConfigError("times must be strictly increasing")
        if self.data.shape[-self.grid.d:] != self.grid.shape:
            raise ConfigError("snapshot shape does not match grid")

    @property
    def nsamples(self) -> int:
        return self.times.size

    def require_samples(self, k: int):
        if self.nsamples < k:
            raise ConfigError(f"need at least {k} time samples, got {self.nsamples}")

    def trapezoid_weights(self) -> np.ndarray:
        t = self.times
        w = np.zeros_like(t)
        if t.size == 1:
            w[0] = 1.0
            return w
        w[1:] += 0.5 * np.diff(t)
        w[:-1] += 0.5 * np.diff(t)
        return w

    def pointwise_sq(self) -> np.ndarray:
        """|u(t,x)|^2 summed over component axes; shape (T, *spatial)."""
        m = np.abs(self.data) ** 2
        extra = m.ndim - 1 - self.grid.d
        if extra:
            m = m.reshape((m.shape[0], -1) + self.grid.shape).sum(axis=1)
        return m


# ---------------------------------------------------------------------------
# dyadic cube machinery


def _cube_point_scales(grid: Grid) -> list[tuple[float, int]]:
    """(l, points_per_side) for admissible dyadic cube scales.

    Sides are p * dx for p a power of two; scales with side < 1 are dropped
    when finer-than-unit cubes exist (scale indices run over nonnegative l).
    """
    out = []
    p = 1
    while p <= grid.n:
        side = p * grid.spec.dx
        if side >= 1.0 - 1e-12 or p == grid.n:
            out.append((math.log2(side), p))
        p *= 2
    if not out:
        out.append((math.log2(grid.L), grid.n))
    return out


def _scale_for(grid: Grid, l_target: float) -> tuple[float, int]:
    """Admissible scale closest to side 2^l_target (clamped to the range)."""
    scales = _cube_point_scales(grid)
    return min(scales, key=lambda s: abs(s[0] - l_target))


def _block_sum(w: np.ndarray, p: int, d: int) -> np.ndarray:
    """Sum w over cubes of p^d points; w has shape (n,)*d."""
    if p == 1:
        return w
    n = w.shape[-1]
    m = n // p
    sh = []
    for _ in range(d):
        sh.extend([m, p])
    v = w.reshape(sh)
    for a in range(d):
        v = v.sum(axis=2 * a + 1, keepdims=True)
    return v.reshape((m,) * d)


def _block_max(w: np.ndarray, f: int, d: int) -> np.ndarray:
    if f == 1:
        return w
    m = w.shape[-1] // f
    sh = []
    for _ in range(d):
        sh.extend([m, f])
    v = w.reshape(sh)
    for a in range(d):
        v = v.max(axis=2 * a + 1, keepdims=True)
    return v.reshape((m,) * d)


def x_norm(u: TimeSeriesField) -> float:
    """sup over dyadic scales and cubes of 2^(-l/2) ||u||_{L^2L^2([0,T] x Q)}."""
    u.require_samples(2)
    g = u.grid
    wt = u.trapezoid_weights()
    w = np.tensordot(wt, u.pointwise_sq(), axes=(0, 0)) * g.spec.cell_volume
    best = 0.0
    for l, p in _cube_point_scales(g):
        s = _block_sum(w, p, g.d)
        best = max(best, 2.0 ** (-l / 2) * math.sqrt(float(s.max())))
    return best


def _per_cube_x_values(g: Grid, w: np.ndarray, p_out: int) -> np.ndarray:
    """||chi_Q u||_X for every cube Q of p_out points per side.

    ``w`` is the time-integrated mass density including the cell volume.
    """
    scales = _cube_point_scales(g)
    l_out = None
    best = None
    for l, p in scales:
        if p > p_out:
            continue
        s = _block_sum(w, p, g.d)
        v = 2.0 ** (-l / 2) * np.sqrt(s)
        v = _block_max(v, p_out // p, g.d)
        best = v if best is None else np.maximum(best, v)
        l_out = l if p == p_out else l_out
    mass_out = _block_sum(w, p_out, g.d)
    # cubes strictly coarser than Q contain all of Q's mass; the sup over
    # those scales is attained at the next admissible one
    coarser = [l for l, p in scales if p > p_out]
    if coarser:
        cand = 2.0 ** (-coarser[0] / 2) * np.sqrt(mass_out)
        best = cand if best is None else np.maximum(best, cand)
    if best is None:
        best = 2.0 ** (-(l_out or 0.0) / 2) * np.sqrt(mass_out)
    return best


def _per_cube_linf_l2(g: Grid, m_t: np.ndarray, p: int) -> np.ndarray:
    """sup_t ||chi_Q u(t)||_{L^2} per cube; m_t is (T, *spatial) |u|^2."""
    out = None
    for k in range(m_t.shape[0]):
        s = _block_sum(m_t[k], p, g.d) * g.spec.cell_volume
        out = s if out is None else np.maximum(out, s)
    return np.sqrt(out)


def _block_series(fam: LPFamily, u: TimeSeriesField, j: int) -> np.ndarray:
    """S_j u as a (T, *spatial) array with components merged by quadrature."""
    g = u.grid
    data = u.data.reshape((u.nsamples, -1) + g.shape)
    out = np.zeros((u.nsamples,) + g.shape)
    mult = fam.block_multiplier(j)
    for k in range(u.nsamples):
        pj = g.ifft(g.fft(data[k]) * mult)
        out[k] = (np.abs(pj) ** 2).sum(axis=0)
    return out  # |S_j u|^2 pointwise

def _shell_series(fam: LPFamily, u: TimeSeriesField, j: int) -> np.ndarray:
    g = u.grid
    data = u.data.reshape((u.nsamples, -1) + g.shape)
    out = np.zeros((u.nsamples,) + g.shape)
    mult = fam.shell_multiplier(j)
    for k in range(u.nsamples):
        pj = g.ifft(g.fft(data[k]) * mult)
        out[k] = (np.abs(pj) ** 2).sum(axis=0)
    return out


def l2xs_norm(u: TimeSeriesField, s: float, fam: LPFamily | None = None) -> float:
    """l^2 X^s norm: sum_j 2^(2js) ||S_j u||^2 in l^2_j X_j cube summation."""
    u.require_samples(2)
    g = u.grid
    fam = fam or LPFamily(g)
    wt = u.trapezoid_weights()
    total = 0.0
    for j in fam.blocks:
        m_t = _block_series(fam, u, j)              # |S_j u|^2 (T, *sp)
        w = np.tensordot(wt, m_t, axes=(0, 0)) * g.spec.cell_volume
        _, p = _scale_for(g, max(j, 0))
        xvals = _per_cube_x_values(g, w, p)
        livals = _per_cube_linf_l2(g, m_t, p)
        xj = 2.0 ** (j / 2) * xvals + livals        # X_j norm per cube
        total += 2.0 ** (2 * j * s) * float((xj**2).sum())
    return math.sqrt(total)


def z_norm(u: TimeSeriesField, sigma: float, s: float,
           fam: LPFamily | None = None) -> float:
    """Z^{sigma,s}: |D|^sigma S_0 u in l^2_0 L^inf L^2 plus weighted high blocks."""
    u.require_samples(1)
    g = u.grid
    fam = fam or LPFamily(g)
    total = 0.0
    # low block, with the homogeneous weight |xi|^sigma
    data = u.data.reshape((u.nsamples, -1) + g.shape)
    mult = fam.block_multiplier(0)
    with np.errstate(divide="ignore"):
        wD = np.where(g.xi_sq > 0, np.sqrt(g.xi_sq) ** sigma, 0.0)
    m_t = np.zeros((u.nsamples,) + g.shape)
    for k in range(u.nsamples):
        pj = g.ifft(g.fft(data[k]) * (mult * wD))
        m_t[k] = (np.abs(pj) ** 2).sum(axis=0)
    _, p0 = _scale_for(g, 0.0)
    total += float((_per_cube_linf_l2(g, m_t, p0) ** 2).sum())
    for j in fam.blocks:
        if j == 0:
            continue
        m_t = _block_series(fam, u, j)
        _, p = _scale_for(g, j)
        total += 2.0 ** (2 * s * j) * float((_per_cube_linf_l2(g, m_t, p) ** 2).sum())
    return math.sqrt(total)


def y_norm(h: TimeSeriesField, sigma_low: float, s: float,
           fam: LPFamily | None = None) -> float:
    """Y^{sigma,s} with the trivial decomposition h_{j,|j|} = P_j h.

    Upper bound for the decomposition infimum: each shell is measured in
    l^1 over cubes of side 2^{|j|} (clamped to the grid's scale range).
    """
    h.require_samples(1)
    g = h.grid
    fam = fam or LPFamily(g)
    total = 0.0
    for j in fam.shells:
        m_t = _shell_series(fam, h, j)
        _, p = _scale_for(g, abs(j))
        vals = _per_cube_linf_l2(g, m_t, p)
        yj = float(vals.sum())  # l^1 over cubes, weight 2^{l-|j|} = 1 at l=|j|
        jm, jp = min(j, 0), max(j, 0)
        total += 2.0 ** (2 * (sigma_low * jm + s * jp)) * yj**2
    return math.sqrt(total)


def n_norm_upper_bound(u: TimeSeriesField, j: int) -> float:
    """The stated upper bound 2^{j/2} ||u||_{l^1_j L^2 L^2} for the atomic N norm."""
    u.require_samples(2)
    g = u.grid
    wt = u.trapezoid_weights()
    w = np.tensordot(wt, u.pointwise_sq(), axes=(0, 0)) * g.spec.cell_volume
    _, p = _scale_for(g, max(j, 0))
    s = _block_sum(w, p, g.d)
    return 2.0 ** (j / 2) * float(np.sqrt(s).sum())


# ---------------------------------------------------------------------------
# fixed-time norms


def gauge_norm_hs(S, s: float) -> float:
    """||lambda||_{H^s} + |||D|h||_{H^{s+1}} + |||D|V||_{H^s} + |||D|A||_{H^s}
    + |||D|B||_{H^{s-1}} for a gauge tuple S = (lambda, h, V, A, B)."""
    g: Grid = S.grid
    return (_hs(g, S.lam, s)
            + _hs_D(g, S.h, s + 1)
            + _hs_D(g, S.V, s)
            + _hs_D(g, S.A, s)
            + _hs_D(g, S.B, s - 1))


def _hs(g: Grid, f: np.ndarray, s: float) -> float:
    return g.sobolev_norm(f, s)


def _hs_D(g: Grid, f: np.ndarray, s: float) -> float:
    """|| |D| f ||_{H^s}: one homogeneous derivative, then inhomogeneous weights."""
    fh = g.spectral(f)
    mag2 = np.abs(fh) ** 2
    if mag2.ndim > g.d:
        mag2 = mag2.reshape((-1,) + g.shape).sum(axis=0)
    w = g.xi_sq * g._sob_weight(float(s), False)
    return float(np.sqrt(np.sum(w * mag2)))


# ---------------------------------------------------------------------------
# frequency envelopes


@dataclass
class FrequencyEnvelope:
    """Slowly varying l^2 envelope a_j >= ||S_j u|| over shells j >= 0."""

    delta: float
    values: np.ndarray
    shell_norms: np.ndarray = field(default=None)

    def is_admissible(self, tol: float = 1e-12) -> bool:
        a = self.values
        n = a.size
        for j in range(n):
            for k in range(n):
                if a[j] > 2.0 ** (self.delta * abs(j - k)) * a[k] + tol:
                    return False
        return True


def frequency_envelope(u, s: float, delta: float = 0.1,
                       grid: Grid | None = None,
                       fam: LPFamily | None = None) -> FrequencyEnvelope:
    """Envelope a_j = 2^{-delta j} ||u|| + max_k 2^{-delta|j-k|} ||S_k u||.

    ``u`` is a fixed-time field (with ``grid`` given) measured in H^s, or a
    TimeSeriesField measured in l^2 X^s block norms.
    """
    if not (0 < delta < 1):
        raise ConfigError("delta must lie in (0,1)")
    if isinstance(u, TimeSeriesField):
        g = u.grid
        fam = fam or LPFamily(g)
        wt = u.trapezoid_weights()
        norms = []
        for j in fam.blocks:
            m_t = _block_series(fam, u, j)
            w = np.tensordot(wt, m_t, axes=(0, 0)) * g.spec.cell_volume
            _, p = _scale_for(g, max(j, 0))
            xv = _per_cube_x_values(g, w, p)
            lv = _per_cube_linf_l2(g, m_t, p)
            xj = 2.0 ** (j / 2) * xv + lv
            norms.append(2.0 ** (j * s) * math.sqrt(float((xj**2).sum())))
        norms = np.array(norms)
        total = math.sqrt(float((norms**2).sum()))
    else:
        if grid is None:
            raise ConfigError("grid required for fixed-time envelope")
        g = grid
        fam = fam or LPFamily(g)
        fh = g.fft(np.asarray(u))
        norms = np.array([
            g.sobolev_norm(g.ifft(fh * fam.block_multiplier(j)), s)
            for j in fam.blocks
        ])
        total = g.sobolev_norm(u, s)
    js = np.arange(len(norms))
    a = np.empty(len(norms))
    for j in js:
        a[j] = 2.0 ** (-delta * j) * total + float(
            np.max(2.0 ** (-delta * np.abs(j - js)) * norms))
    return FrequencyEnvelope(delta=delta, values=a, shell_norms=norms)
