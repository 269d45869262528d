"""Global harmonic coordinates for graph-type immersions.

An immersion is stored as its periodic remainder over the flat reference
plane: F(x) = (x, 0, 0) + periodic(x).  The coordinate change y = x + phi(x)
is found by a Picard iteration on the elliptic equation Delta phi = Non(g, phi)
whose fixed point makes the pulled-back coordinates harmonic:
tilde-g^{ab} tilde-Gamma^c_{ab} = 0.  The nonlinearity is evaluated through
the exact pullback algebra: with M = d(phi), the higher-order matrix

    C = M^2 (I - M)^{-1},     dx/dy = I - M + C,

and the chain-rule correction K to the y-derivative of the pulled-back
metric.  The boundary condition phi -> 0 at infinity becomes the zero-mode
convention on the torus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, NoConvergence, InversionDivergence, ConfigError
from .gauge import PicardConfig
from .geometry import MetricState, metric_from_h, sym2
from .grid import Grid

__all__ = [
    "Immersion",
    "CoordinateChange",
    "graph_immersion",
    "induced_metric",
    "phi_solve",
    "apply_coordinate_change",
    "harmonic_residual",
]


class DegenerateImmersion(NumericalError):
    pass


@dataclass
class Immersion:
    """Graph-type immersion F(x) = (x, 0, 0) + periodic(x) into R^{d+2}."""

    grid: Grid
    periodic: np.ndarray      # (d+2, *sp) real

    def __post_init__(self):
        d = self.grid.d
        if self.periodic.shape != (d + 2,) + self.grid.shape:
            raise ConfigError("periodic part must have shape (d+2, *spatial)")

    def values(self) -> np.ndarray:
        """F sampled on the lattice, shape (d+2, *sp)."""
        g = self.grid
        out = self.periodic.copy()
        for a in range(g.d):
            out[a] = out[a] + g.coords(a)
        return out

    def tangents(self) -> np.ndarray:
        """F_a = d_a F, shape (d, d+2, *sp)."""
        g = self.grid
        dP = g.grad(self.periodic)
        for a in range(g.d):
            dP[a, a] = dP[a, a] + 1.0
        return dP


def graph_immersion(grid: Grid, f1: np.ndarray, f2: np.ndarray) -> Immersion:
    """Immersion (x, f1(x), f2(x)) from two periodic height functions."""
    per = np.zeros((grid.d + 2,) + grid.shape)
    per[grid.d] = f1
    per[grid.d + 1] = f2
    return Immersion(grid, per)


def induced_metric(imm: Immersion) -> MetricState:
    """Pointwise Gram matrix of the tangent vectors."""
    g = imm.grid
    Fa = imm.tangents()
    gm = np.einsum("ak...,bk...->ab...", Fa, Fa, optimize=True)
    eye = np.eye(g.d).reshape((g.d, g.d) + (1,) * g.d)
    try:
        return metric_from_h(g, gm - eye, validate=True)
    except NumericalError as exc:
        raise DegenerateImmersion(str(exc)) from exc


@dataclass
class CoordinateChange:
    grid: Grid
    phi: np.ndarray            # (d, *sp), mean-zero: y = x + phi(x)
    iterations: int = 0
    residual: float = 0.0

    def grad_phi_sup(self) -> float:
        g = self.grid
        return float(np.max(np.abs(g.grad(self.phi))))


def _pullback_pieces(grid: Grid, phi: np.ndarray):
    """M[m,a] = d phi_m / d x_a, C = M^2 (I-M)^{-1}, P = -M + C (dx/dy = I+P)."""
    d = grid.d
    N = grid.spec.npoints
    dphi = grid.grad(phi)                         # [a, m] = d_a phi_m
    M = np.ascontiguousarray(np.einsum("am...->ma...", dphi))
    Mmat = np.moveaxis(M.reshape(d, d, N), (0, 1), (-2, -1))   # (N, d, d)
    inv = np.linalg.inv(np.eye(d) - Mmat)
    Cmat = Mmat @ Mmat @ inv
    C = np.ascontiguousarray(np.moveaxis(Cmat, (-2, -1), (0, 1))) \
        .reshape((d, d) + grid.shape)
    P = -M + C
    return M, C, P


def nonlinearity(grid: Grid, ms: MetricState, phi: np.ndarray) -> np.ndarray:
    """Right-hand side Non_gamma(g, phi) of the harmonic-coordinate equation.

    Exact rearrangement of tilde-g^{ab} tilde-Gamma_{ab,gamma} = 0 with the
    flat Laplacian split off:

        Delta phi_g = -(G^{ab} g_{mg} - delta^{ab} delta_{mg}) d2_{ab} phi_m
                      + G^{ab} [Gamma_{ab,g} + (K_{bg,a} + K_{ag,b} - K_{ab,g})/2]

    where G^{ab} is the pulled-back inverse metric expressed in x.
    """
    d = grid.d
    N = grid.spec.npoints
    sp = grid.shape
    M, C, P = _pullback_pieces(grid, phi)
    eyeP = P.copy()
    for a in range(d):
        eyeP[a, a] = eyeP[a, a] + 1.0              # dx/dy = I + P

    gm = ms.g.reshape(d, d, N)
    ginv = ms.ginv.reshape(d, d, N)
    dgf = ms.dg.reshape(d, d, d, N)
    Pf = P.reshape(d, d, N)
    eyePf = eyeP.reshape(d, d, N)

    d2phi = grid.second_derivs(phi).reshape(d, d, d, N)   # [a, b, m] = d2_{ab} phi_m
    dC = grid.grad(C.reshape((d * d,) + sp)).reshape((d, d, d) + sp)
    dCf = dC.reshape(d, d, d, N)                           # [c, m, a] = d_c C_{m a}

    # Q_{ab} = g_{mn} (dx_m/dy_a)(dx_n/dy_b); its x-derivative feeds K's tail
    Q = np.einsum("mnx,max,nbx->abx", gm, eyePf, eyePf, optimize=True)
    dQ = grid.grad(Q.reshape((d * d,) + sp)).reshape((d, d, d) + sp)
    dQf = dQ.reshape(d, d, d, N)                           # [c, a, b] = d_c Q_{ab}

    # K_{ab,c}; see the pullback derivation
    K = (-np.einsum("mnx,acmx,nbx->abcx", gm, d2phi, Pf, optimize=True)
         + np.einsum("mnx,cmax,nbx->abcx", gm, dCf, eyePf, optimize=True)
         - np.einsum("mnx,max,bcnx->abcx", gm, Pf, d2phi, optimize=True)
         + np.einsum("mnx,max,cnbx->abcx", gm, eyePf, dCf, optimize=True)
         + np.einsum("canx,nbx->abcx", dgf, Pf, optimize=True)
         + np.einsum("cmnx,max,nbx->abcx", dgf, Pf, eyePf, optimize=True)
         + np.einsum("mabx,mcx->abcx", dQf, Pf, optimize=True))

    # pulled-back inverse metric in x coordinates
    EyM = np.eye(d)[:, :, None] + np.einsum("max->amx", M.reshape(d, d, N))
    G = np.einsum("mnx,max,nbx->abx", ginv, EyM, EyM, optimize=True)

    gaml = ms.gaml.reshape(d, d, d, N)
    bracket = gaml + 0.5 * (np.einsum("bcax->abcx", K)
                            + np.einsum("acbx->abcx", K) - K)
    rhs = np.einsum("abx,abcx->cx", G, bracket, optimize=True)
    corr = -(np.einsum("abx,mcx,abmx->cx", G, gm, d2phi, optimize=True)
             - np.einsum("aacx->cx", d2phi))
    out = (rhs + corr).reshape((d,) + sp)
    return grid.dealias(out)


def phi_solve(imm: Immersion, cfg: PicardConfig | None = None) -> CoordinateChange:
    """Picard iteration phi <- Delta^{-1} Non(g, phi) from phi = 0."""
    cfg = cfg or PicardConfig()
    g = imm.grid
    s = cfg.sobolev_index(g.d)
    ms = induced_metric(imm)
    dh_hs = g.sobolev_norm(ms.dg, s)
    if dh_hs > 4 * cfg.eps0:
        import warnings
        warnings.warn(f"||grad h||_Hs = {dh_hs:.3e} is large; the harmonic "
                      "coordinate construction may leave its contraction regime",
                      stacklevel=2)
    phi = np.zeros((g.d,) + g.shape)
    prev_norm = None
    for it in range(cfg.max_iter):
        rhs = nonlinearity(g, ms, phi)
        phi_new = g.inverse_laplacian(rhs)
        sup = float(np.max(np.abs(g.grad(phi_new))))
        if sup >= 0.5:
            raise InversionDivergence(
                f"||grad phi||_inf = {sup:.3f} >= 1/2; invertibility lost")
        change = g.sobolev_norm(phi_new - phi, s + 2)
        denom = max(g.sobolev_norm(phi_new, s + 2), 1e-300)
        phi = phi_new
        if change / denom < cfg.tol_rel:
            return CoordinateChange(g, phi, iterations=it + 1,
                                    residual=change / denom)
    raise NoConvergence(
        f"harmonic coordinate iteration did not converge in {cfg.max_iter} sweeps")


def apply_coordinate_change(imm: Immersion, cc: CoordinateChange,
                            tol: float = 1e-12, max_iter: int = 60) -> Immersion:
    """Resample the immersion on the y-lattice where y = x + phi(x).

    The inverse map is computed per grid point by the damped fixed point
    x <- y - phi(x) (a contraction for ||grad phi||_inf < 1/2); the periodic
    remainder of F is then evaluated at x(y) by trigonometric interpolation.
    """
    g = imm.grid
    d = g.d
    sup = cc.grad_phi_sup()
    if sup >= 0.5:
        raise InversionDivergence("||grad phi||_inf >= 1/2")
    pts = np.stack([np.broadcast_to(g.coords(a), g.shape).ravel()
                    for a in range(d)], axis=1)          # y points (N, d)
    x = pts.copy()
    for it in range(max_iter):
        phi_at_x = g.interpolate(cc.phi, x).real.T      # (N, d)
        x_new = pts - phi_at_x
        delta = float(np.max(np.abs(x_new - x)))
        x = x_new
        if delta < tol:
            break
    else:
        raise InversionDivergence(
            f"coordinate inversion stalled (last update {delta:.3e})")
    chi = (x - pts).T.reshape((d,) + g.shape)            # x(y) - y, periodic
    per_interp = g.interpolate(imm.periodic, x).real.reshape(
        (d + 2,) + g.shape)
    new_per = per_interp.copy()
    new_per[:d] += chi
    return Immersion(g, new_per)


def harmonic_residual(imm: Immersion) -> float:
    """|| g^{ab} Gamma^c_{ab} ||_{L^2} of an immersion's induced metric."""
    g = imm.grid
    ms = induced_metric(imm)
    res = np.einsum("ab...,cab...->c...", ms.ginv, ms.gam, optimize=True)
    return g.l2(res)
