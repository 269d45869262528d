"""Discrete Riemannian and gauge-covariant calculus on perturbed-flat metrics.

Index conventions for component axes (always leading, spatial axes last):

* metric ``g[a, b]``, inverse ``ginv[a, b]``
* Christoffel ``Gam[c, a, b] = Gamma^c_{ab}`` (symmetric in a, b),
  ``Gaml[a, b, c] = Gamma_{ab,c}``
* curvature ``Rup[s, c, a, b] = R^s_{c a b}``; lowered ``R[s, c, a, b]``
* covariant derivatives put the new lower index first.

Curvature is computed from the coordinate formula in Gamma, never from the
second fundamental form; the lambda-quadratic expressions are reserved for
the constraint residuals so the two routes stay independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricDegenerate, ConfigError
from .grid import Grid

__all__ = [
    "MetricState",
    "metric_from_h",
    "riemann_ricci",
    "cov_derivative",
    "magnetic_derivative",
    "connection_curvature",
    "sym2",
]


def sym2(T: np.ndarray) -> np.ndarray:
    """Symmetrize the two leading component axes."""
    return 0.5 * (T + np.swapaxes(T, 0, 1))


@dataclass
class MetricState:
    grid: Grid
    g: np.ndarray          # (d, d, *sp)
    ginv: np.ndarray       # (d, d, *sp)
    gam: np.ndarray        # (d, d, d, *sp)  Gamma^c_{ab}
    gaml: np.ndarray       # (d, d, d, *sp)  Gamma_{ab,c}
    dg: np.ndarray         # (d, d, d, *sp)  d_a g_{bc}

    @property
    def h(self) -> np.ndarray:
        eye = np.eye(self.grid.d).reshape((self.grid.d, self.grid.d) + (1,) * self.grid.d)
        return self.g - eye

    def dginv(self) -> np.ndarray:
        """d_a g^{bc} = -g^{bm} (d_a g_{mn}) g^{nc} (exact pointwise identity)."""
        return -np.einsum("bm...,amn...,nc...->abc...", self.ginv, self.dg, self.ginv,
                          optimize=True)

    def raise1(self, T: np.ndarray, axis: int = 0) -> np.ndarray:
        """Raise one index (given component axis) with g^{ab}."""
        T = np.moveaxis(T, axis, 0)
        out = np.einsum("ab...,b...->a...", self.ginv, T, optimize=True)
        return np.moveaxis(out, 0, axis)

    def lower1(self, T: np.ndarray, axis: int = 0) -> np.ndarray:
        T = np.moveaxis(T, axis, 0)
        out = np.einsum("ab...,b...->a...", self.g, T, optimize=True)
        return np.moveaxis(out, 0, axis)


def metric_from_h(grid: Grid, h: np.ndarray, validate: bool = True,
                  eig_check: bool = False, eps_g: float = 0.5) -> MetricState:
    """Build g = I + h with inverse and Christoffel symbols.

    ``h`` is a symmetric real (d, d, *sp) field.  The inverse is the exact
    pointwise matrix inverse; Christoffel symbols use spectral derivatives
    and are dealiased.
    """
    d = grid.d
    if h.shape[:2] != (d, d):
        raise ConfigError("h must have shape (d, d, *spatial)")
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    g = eye + h
    if validate:
        hmax = float(np.max(np.abs(h))) if h.size else 0.0
        # Gershgorin screen first; exact eigenvalue check only when it fails
        if d * hmax >= eps_g or eig_check:
            ev = np.linalg.eigvalsh(np.moveaxis(g, (0, 1), (-2, -1)))
            if ev.min() <= 1 - eps_g or ev.max() >= 1 + eps_g:
                raise MetricDegenerate(
                    f"metric eigenvalues outside [{1 - eps_g}, {1 + eps_g}]")
    ginv = np.linalg.inv(np.moveaxis(g, (0, 1), (-2, -1)))
    ginv = np.ascontiguousarray(np.moveaxis(ginv, (-2, -1), (0, 1)))
    from .grid import sym_index_pairs, sym_pack  # local import avoids a cycle
    pairs = sym_index_pairs(d)
    dhp = grid.grad(sym_pack(h, d))
    da_g = np.empty((d, d, d) + grid.shape)
    for i, (a, b) in enumerate(pairs):
        da_g[:, a, b] = dhp[:, i]
        da_g[:, b, a] = dhp[:, i]
    # da_g[a, b, c] = d_a g_{bc};  Gamma_{ab,c} = (d_a g_{bc} + d_b g_{ac} - d_c g_{ab}) / 2
    gaml = 0.5 * (da_g
                  + np.einsum("bac...->abc...", da_g)
                  - np.einsum("cab...->abc...", da_g))
    N = grid.spec.npoints
    gam = np.einsum("csx,absx->cabx", ginv.reshape(d, d, N),
                    gaml.reshape(d, d, d, N), optimize=True)
    gam = gam.reshape((d, d, d) + grid.shape)
    # dealias over the symmetric (a, b) pair to halve the transform volume
    gp = np.stack([gam[:, a, b] for a, b in pairs])
    gp = grid.dealias(gp.reshape((-1,) + grid.shape)).reshape(gp.shape)
    for i, (a, b) in enumerate(pairs):
        gam[:, a, b] = gp[i]
        gam[:, b, a] = gp[i]
    return MetricState(grid=grid, g=g, ginv=ginv, gam=gam, gaml=gaml, dg=da_g)


def riemann_ricci(ms: MetricState):
    """Curvature from the coordinate formula in Gamma.

    Returns (R lowered (d,d,d,d,*sp), Ric (d,d,*sp), scalar R (*sp)).
    """
    g = ms.grid
    d = g.d
    dgam = g.grad(ms.gam.reshape((d**3,) + g.shape)).reshape((d, d, d, d) + g.shape)
    # dgam[a, s, b, c] = d_a Gamma^s_{bc}
    # Rup[s, c, a, b] = d_a Gam^s_{bc} - d_b Gam^s_{ac}
    #                   + Gam^m_{bc} Gam^s_{am} - Gam^m_{ac} Gam^s_{bm}
    Rup = (np.einsum("asbc...->scab...", dgam)
           - np.einsum("bsac...->scab...", dgam)
           + np.einsum("mbc...,sam...->scab...", ms.gam, ms.gam, optimize=True)
           - np.einsum("mac...,sbm...->scab...", ms.gam, ms.gam, optimize=True))
    R = np.einsum("sm...,mcab...->scab...", ms.g, Rup, optimize=True)
    ric = np.einsum("sasb...->ab...", Rup)
    scal = np.einsum("ab...,ab...->...", ms.ginv, ric, optimize=True)
    return R, ric, scal


_VAR_OK = frozenset("ud")


def cov_derivative(grid: Grid, T: np.ndarray, ms: MetricState,
                   variances: tuple = ()) -> np.ndarray:
    """Covariant derivative; the new covariant index is the leading axis.

    ``variances`` marks each existing component axis 'u' (contravariant) or
    'd' (covariant).  Supported ranks: 0, 1, 2.
    """
    if len(variances) > 2:
        raise ConfigError("cov_derivative supports rank <= 2")
    if any(v not in _VAR_OK for v in variances):
        raise ConfigError(f"bad variance spec {variances!r}")
    flat = T.reshape((-1,) + grid.shape)
    dT = grid.grad(flat).reshape((grid.d,) + T.shape)
    out = dT
    N = grid.spec.npoints
    gam = ms.gam.reshape(grid.d, grid.d, grid.d, N)
    for pos, v in enumerate(variances):
        Tm = np.moveaxis(T, pos, 0)
        Tm = Tm.reshape((grid.d, -1, N))
        if v == "u":
            corr = np.einsum("casx,srx->acrx", gam, Tm, optimize=True)
        else:
            corr = -np.einsum("sacx,srx->acrx", gam, Tm, optimize=True)
        corr = corr.reshape((grid.d,) + np.moveaxis(T, pos, 0).shape)
        # corr axes: (a_new, idx, *rest); move idx back to its original slot
        corr = np.moveaxis(corr, 1, pos + 1)
        out = out + corr
    return out


def magnetic_derivative(grid: Grid, T: np.ndarray, A: np.ndarray,
                        ms: MetricState, variances: tuple = ()) -> np.ndarray:
    """Gauge-covariant derivative: cov_derivative plus i A_a times the field."""
    base = cov_derivative(grid, T, ms, variances)
    Ae = A.reshape((grid.d,) + (1,) * (T.ndim - grid.d) + grid.shape)
    return base + 1j * Ae * T[None]


def connection_curvature(grid: Grid, A: np.ndarray) -> np.ndarray:
    """F_{ab} = d_a A_b - d_b A_a (exactly antisymmetric)."""
    dA = grid.grad(A)  # (a, b, *sp) = d_a A_b
    return dA - np.swapaxes(dA, 0, 1)
