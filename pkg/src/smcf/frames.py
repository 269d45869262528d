"""Orthonormal frame construction, Coulomb rotation, and frame/surface
propagation along the flow, with the end-to-end SMCF residual check.

The frame (F_alpha, m = nu1 + i nu2) is built at t = 0 by Gram-Schmidt from
the graph's reference normals, rotated into Coulomb gauge, then advanced in
time by the frame equations of motion.  The motion is a pointwise linear ODE
in the frame whose coefficient fields are algebraic in (psi, S); they are
precomputed at the trajectory's snapshot times and interpolated (cubic
Lagrange) at the RK4 stage times, so the integration itself is embarrassingly
parallel over grid points.

The surface F is integrated alongside; the final check compares the normal
part of dF/dt against the pi/2-rotated mean curvature computed spectrally
from the propagated surface itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, ConfigError, NumericalError
from .gauge import GaugeState
from .geometry import MetricState, cov_derivative, metric_from_h
from .grid import Grid
from .harmonic import Immersion
from .evolution import Trajectory

__all__ = [
    "FrameState",
    "initial_frame",
    "coulomb_rotation",
    "propagate_frame",
    "FrameTrajectory",
    "smcf_residual",
    "frame_invariant_errors",
    "frame_consistency",
]


@dataclass
class FrameState:
    """Immersion, tangent vectors and complexified normal frame."""

    grid: Grid
    F_periodic: np.ndarray    # (d+2, *sp) periodic remainder of F
    F_alpha: np.ndarray       # (d, d+2, *sp)
    m: np.ndarray             # (d+2, *sp) complex

    def copy(self) -> "FrameState":
        return FrameState(self.grid, self.F_periodic.copy(),
                          self.F_alpha.copy(), self.m.copy())

    def F_values(self) -> np.ndarray:
        out = self.F_periodic.copy()
        for a in range(self.grid.d):
            out[a] = out[a] + self.grid.coords(a)
        return out

    def nu(self) -> tuple:
        return np.real(self.m), np.imag(self.m)


def initial_frame(imm: Immersion):
    """Frame, second fundamental form and connection of a graph immersion.

    nu1, nu2 come from Gram-Schmidt of the reference normal directions
    against the tangent space, oriented so (F_1..F_d, nu1, nu2) is positive.
    Returns (FrameState, lam, A, psi, MetricState).
    """
    g = imm.grid
    d = g.d
    Fa = imm.tangents()                       # (d, d+2, *sp)
    gm = np.einsum("ak...,bk...->ab...", Fa, Fa, optimize=True)
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    ms = metric_from_h(g, gm - eye)

    def project_out(v):
        coef = np.einsum("ab...,bk...,k...->a...", ms.ginv, Fa, v, optimize=True)
        return v - np.einsum("a...,ak...->k...", coef, Fa, optimize=True)

    n1 = np.zeros((d + 2,) + g.shape)
    n1[d] = 1.0
    n2 = np.zeros((d + 2,) + g.shape)
    n2[d + 1] = 1.0
    nu1 = project_out(n1)
    nu1 = nu1 / np.sqrt(np.einsum("k...,k...->...", nu1, nu1))
    nu2 = project_out(n2)
    nu2 = nu2 - np.einsum("k...,k...->...", nu2, nu1) * nu1
    nu2 = nu2 / np.sqrt(np.einsum("k...,k...->...", nu2, nu2))

    # orientation: det(F_1 .. F_d nu1 nu2) > 0
    cols = np.concatenate([Fa, nu1[None], nu2[None]], axis=0)  # (d+2, d+2, *sp)
    mat = np.moveaxis(cols.reshape(d + 2, d + 2, -1), -1, 0)   # (N, col, k)
    dets = np.linalg.det(np.swapaxes(mat, -2, -1))
    if np.any(dets < 0):
        if np.all(dets < 0):
            nu2 = -nu2
        else:
            raise NumericalError("immersion orientation is not uniform")

    m = nu1 + 1j * nu2
    dFa = g.grad(Fa.reshape((d * (d + 2),) + g.shape)) \
        .reshape((d, d, d + 2) + g.shape)     # [a, b, k] = d_a F_b[k]
    lam = (np.einsum("abk...,k...->ab...", dFa, nu1, optimize=True)
           + 1j * np.einsum("abk...,k...->ab...", dFa, nu2, optimize=True))
    dnu1 = g.grad(nu1)
    A = np.einsum("ak...,k...->a...", dnu1, nu2, optimize=True)
    psi = np.einsum("ab...,ab...->...", ms.ginv, lam, optimize=True)
    frame = FrameState(g, imm.periodic.copy(), Fa, m)
    return frame, lam, A, psi, ms


def coulomb_rotation(frame: FrameState, lam: np.ndarray, A: np.ndarray,
                     ms: MetricState, tol: float = 1e-12, max_iter: int = 60):
    """Rotate the normal frame so the connection is divergence free.

    Solves Delta_g theta = div_g A for mean-zero theta by Picard sweeps with
    the flat inverse Laplacian, then applies the gauge action
    (m, lam, A) -> (e^{i theta} m, e^{i theta} lam, A - d theta).
    Returns (frame', lam', A', theta).
    """
    g = frame.grid
    d = g.d
    covA = cov_derivative(g, A, ms, ("d",))
    divA = np.einsum("ab...,ab...->...", ms.ginv, covA, optimize=True)
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    hup = ms.ginv - eye
    theta = np.zeros(g.shape)
    # no truncation inside the sweep: the fixed point then satisfies
    # Delta_g theta = div_g A - c pointwise, with c the irreducible torus
    # zero mode (the closed-manifold divergence obstruction)
    for it in range(max_iter):
        d2t = g.second_derivs(theta)
        dt1 = g.grad(theta)
        corr = (np.einsum("ab...,ab...->...", hup, d2t, optimize=True)
                - np.einsum("ab...,sab...,s...->...", ms.ginv, ms.gam, dt1,
                            optimize=True))
        theta_new = g.inverse_laplacian(divA - corr)
        change = g.l2(theta_new - theta)
        theta = theta_new
        if change < tol * max(g.l2(theta), 1e-300):
            break
    else:
        raise NoConvergence("Coulomb rotation Picard did not converge")
    phase = np.exp(1j * theta)
    out = frame.copy()
    out.m = phase * frame.m
    lam2 = phase * lam
    A2 = A - g.grad(theta)
    return out, lam2, A2, theta


# ---------------------------------------------------------------------------
# time propagation


def _frame_coeffs(grid: Grid, psi: np.ndarray, S: GaugeState):
    """Coefficient fields of the frame equations of motion (pointwise).

    c1[a] = dA_a psi, c2[a] = lam_{a g} V^g, c3[a,g] = Im(psi conj(lam)^g_a)
    + nabla_a V^g, c4[s] = dA^{,s} psi - i lam^s_g V^g, c5 = B, c6 = psi,
    c7[g] = V^g.
    """
    d = grid.d
    N = grid.spec.npoints
    ms = metric_from_h(grid, S.h)
    ginv = ms.ginv.reshape(d, d, N)
    lam = S.lam.reshape(d, d, N)
    A = S.A.reshape(d, N)
    V = S.V.reshape(d, N)
    psif = psi.reshape(N)
    dpsi = grid.grad(psi).reshape(d, N)
    dApsi = dpsi + 1j * A * psif
    lam_up1 = np.einsum("abx,bcx->acx", ginv, lam, optimize=True)
    c1 = dApsi
    c2 = np.einsum("agx,gx->ax", lam, V, optimize=True)
    W = cov_derivative(grid, S.V, ms, ("u",)).reshape(d, d, N)
    c3 = np.imag(psif * np.conj(lam_up1)).transpose(1, 0, 2) + W
    # c3[a, g] = Im(psi conj(lam^g_a)) + nabla_a V^g
    c4 = (np.einsum("sbx,bx->sx", ginv, dApsi, optimize=True)
          - 1j * np.einsum("sgx,gx->sx", lam_up1, V, optimize=True))
    return {"c1": c1, "c2": c2, "c3": c3, "c4": c4,
            "c5": S.B.reshape(N), "c6": psif, "c7": V}


def _lagrange_weights(ts: np.ndarray, t: float) -> np.ndarray:
    w = np.ones(ts.size)
    for i in range(ts.size):
        for j in range(ts.size):
            if i != j:
                w[i] *= (t - ts[j]) / (ts[i] - ts[j])
    return w


class _CoeffInterpolator:
    """Cubic-in-time interpolation of the frame coefficient fields."""

    def __init__(self, grid: Grid, traj: Trajectory):
        self.grid = grid
        self.times = traj.times
        self.tabs = [_frame_coeffs(grid, traj.psis[k], traj.gauges[k])
                     for k in range(traj.times.size)]

    def __call__(self, t: float) -> dict:
        ts = self.times
        n = ts.size
        if n == 1:
            return self.tabs[0]
        i = int(np.searchsorted(ts, t))
        lo = max(0, min(i - 2, n - 4))
        hi = min(n, lo + 4)
        idx = range(lo, hi)
        w = _lagrange_weights(ts[lo:hi], t)
        out = {}
        for key in self.tabs[0]:
            out[key] = sum(wi * self.tabs[k][key] for wi, k in zip(w, idx))
        return out


def _frame_rhs(grid: Grid, Fp: np.ndarray, Fa: np.ndarray, m: np.ndarray,
               c: dict):
    """Pointwise equations of motion for (F, F_alpha, m)."""
    d = grid.d
    N = grid.spec.npoints
    mbar = np.conj(m.reshape(d + 2, N))
    Faf = Fa.reshape(d, d + 2, N)
    dF = (-np.imag(c["c6"][None] * mbar)
          + np.einsum("gx,gkx->kx", c["c7"], Faf, optimize=True))
    dFa = (-np.imag(c["c1"][:, None, :] * mbar[None])
           + np.real(c["c2"][:, None, :] * mbar[None])
           + np.einsum("agx,gkx->akx", c["c3"], Faf, optimize=True))
    dm = (-1j * np.einsum("sx,skx->kx", c["c4"], Faf, optimize=True)
          - 1j * c["c5"][None] * m.reshape(d + 2, N))
    return (dF.reshape((d + 2,) + grid.shape),
            dFa.reshape((d, d + 2) + grid.shape),
            dm.reshape((d + 2,) + grid.shape))


@dataclass
class FrameTrajectory:
    grid: Grid
    times: np.ndarray
    frames: list                      # FrameState at snapshot times
    stats: dict = field(default_factory=dict)


def propagate_frame(frame0: FrameState, traj: Trajectory,
                    dt: float) -> FrameTrajectory:
    """Advance the frame with RK4 in time along a stored trajectory.

    ``dt`` must divide the trajectory's snapshot spacing; frames are stored
    at the snapshot times.
    """
    grid = frame0.grid
    if traj.times.size < 2:
        raise ConfigError("trajectory too short to propagate a frame")
    dt_snap = float(traj.times[1] - traj.times[0])
    ratio = dt_snap / dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError("frame dt must divide the trajectory snapshot stride")
    sub = int(round(ratio))
    interp = _CoeffInterpolator(grid, traj)
    out = FrameTrajectory(grid=grid, times=traj.times.copy(),
                          frames=[frame0.copy()])
    Fp, Fa, m = frame0.F_periodic.copy(), frame0.F_alpha.copy(), frame0.m.copy()
    t = float(traj.times[0])
    for k in range(traj.times.size - 1):
        for _ in range(sub):
            c0 = interp(t)
            ch = interp(t + dt / 2)
            c1 = interp(t + dt)
            k1 = _frame_rhs(grid, Fp, Fa, m, c0)
            k2 = _frame_rhs(grid, Fp + dt / 2 * k1[0], Fa + dt / 2 * k1[1],
                            m + dt / 2 * k1[2], ch)
            k3 = _frame_rhs(grid, Fp + dt / 2 * k2[0], Fa + dt / 2 * k2[1],
                            m + dt / 2 * k2[2], ch)
            k4 = _frame_rhs(grid, Fp + dt * k3[0], Fa + dt * k3[1],
                            m + dt * k3[2], c1)
            Fp = Fp + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            Fa = Fa + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            m = m + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            t += dt
        out.frames.append(FrameState(grid, Fp.copy(), Fa.copy(), m.copy()))
    return out


# ---------------------------------------------------------------------------
# diagnostics


def frame_invariant_errors(fr: FrameState, g_ref: np.ndarray | None = None) -> dict:
    """Pointwise sup errors of the orthonormality/consistency invariants."""
    grid = fr.grid
    d = grid.d
    m = fr.m
    mm = np.einsum("k...,k...->...", m, np.conj(m), optimize=True)
    mmbar = np.einsum("k...,k...->...", m, m, optimize=True)
    out = {
        "mm": float(np.max(np.abs(mm - 2.0))),
        "mmbar": float(np.max(np.abs(mmbar))),
    }
    Fm = np.einsum("ak...,k...->a...", fr.F_alpha, np.conj(m), optimize=True)
    out["orth"] = float(np.max(np.abs(Fm)))
    gram = np.einsum("ak...,bk...->ab...", fr.F_alpha, fr.F_alpha, optimize=True)
    if g_ref is None:
        eye = np.eye(d).reshape((d, d) + (1,) * d)
        g_ref = eye
    out["metric"] = float(np.max(np.abs(gram - g_ref)))
    # integrability d_b F_a = d_a F_b
    dFa = grid.grad(fr.F_alpha.reshape((d * (d + 2),) + grid.shape)) \
        .reshape((d, d, d + 2) + grid.shape)
    out["integrability"] = float(np.max(np.abs(dFa - np.swapaxes(dFa, 0, 1))))
    return out


def frame_consistency(ftraj: FrameTrajectory) -> np.ndarray:
    """L^2 difference between spectral d_a F and the propagated F_alpha."""
    grid = ftraj.grid
    d = grid.d
    out = []
    for fr in ftraj.frames:
        dP = grid.grad(fr.F_periodic)
        for a in range(d):
            dP[a, a] = dP[a, a] + 1.0
        out.append(grid.l2(dP - fr.F_alpha))
    return np.array(out)


def mean_curvature(grid: Grid, fr: FrameState) -> np.ndarray:
    """H = Delta_g F computed spectrally from the propagated surface alone."""
    d = grid.d
    dP = grid.grad(fr.F_periodic)
    Fa = dP.copy()
    for a in range(d):
        Fa[a, a] = Fa[a, a] + 1.0
    gm = np.einsum("ak...,bk...->ab...", Fa, Fa, optimize=True)
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    ms = metric_from_h(grid, gm - eye)
    d2F = grid.second_derivs(fr.F_periodic)       # (d, d, d+2, *sp)
    H = (np.einsum("ab...,abk...->k...", ms.ginv, d2F, optimize=True)
         - np.einsum("ab...,gab...,gk...->k...", ms.ginv, ms.gam, Fa,
                     optimize=True))
    return H


def smcf_residual(ftraj: FrameTrajectory) -> dict:
    """|| (d_t F)^perp - J H ||_{L^2} at interior snapshot times.

    d_t F is a second-order central difference of the stored surfaces; the
    normal projection and the quarter-turn J use the propagated m; H is the
    mean curvature of the propagated surface computed independently of the
    gauge trajectory.
    """
    grid = ftraj.grid
    if len(ftraj.frames) < 3:
        raise ConfigError("need at least 3 stored frames")
    times, l2, rel = [], [], []
    for k in range(1, len(ftraj.frames) - 1):
        two_dt = ftraj.times[k + 1] - ftraj.times[k - 1]
        dF = (ftraj.frames[k + 1].F_periodic
              - ftraj.frames[k - 1].F_periodic) / two_dt
        fr = ftraj.frames[k]
        nu1, nu2 = fr.nu()
        n1 = np.einsum("k...,k...->...", dF, nu1, optimize=True)
        n2 = np.einsum("k...,k...->...", dF, nu2, optimize=True)
        dF_perp = n1 * nu1 + n2 * nu2
        H = mean_curvature(grid, fr)
        h1 = np.einsum("k...,k...->...", H, nu1, optimize=True)
        h2 = np.einsum("k...,k...->...", H, nu2, optimize=True)
        JH = h1 * nu2 - h2 * nu1
        resid = dF_perp - JH
        times.append(ftraj.times[k])
        l2.append(grid.l2(resid))
        rel.append(grid.l2(resid) / max(grid.l2(JH), grid.l2(dF_perp), 1e-300))
    return {"times": np.array(times), "l2": np.array(l2), "rel": np.array(rel)}
