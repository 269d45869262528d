"""Run configuration: TOML file + dotted-key CLI overrides.

All physics defaults live here and are echoed into each run's manifest so
every discretization decision is auditable per run.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError
from .grid import Grid, make_grid
from .gauge import PicardConfig
from .evolution import EvolutionConfig

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

__all__ = ["RunConfig", "load_config", "build_initial_data"]

DATA_KINDS = ("zero", "gaussian-bump", "single-mode", "graph-immersion")
EMIT_KINDS = ("snapshots", "norms", "constraints", "envelopes", "frames")


@dataclass
class DataSpec:
    kind: str = "gaussian-bump"
    amplitude: float = 0.01     # target H^s size (||psi_0||_{H^s}, or ||grad h||_{H^s})
    width: float = 4.0
    seed: int = 0
    mode: tuple = (1,)

    def validate(self):
        if self.kind not in DATA_KINDS:
            raise ConfigError(f"data.kind must be one of {DATA_KINDS}, got {self.kind!r}")
        if self.amplitude < 0 or self.width <= 0:
            raise ConfigError("data.amplitude must be >= 0 and data.width > 0")


@dataclass
class RunConfig:
    grid_d: int = 4
    grid_n: int = 16
    grid_box_length: float = 16.0
    grid_dealias_fraction: float = 2.0 / 3.0
    t_end: float = 0.1
    dt: float = 1e-3
    s: float | None = None
    stability_margin: float = 0.5
    snapshot_stride: int = 5
    scheme: str = "ifrk4"
    picard_tol_rel: float = 1e-10
    picard_max_iter: int = 50
    picard_eps0: float = 0.05
    data: DataSpec = field(default_factory=DataSpec)
    output_dir: str = "smcf-out"
    emit: tuple = ("snapshots", "norms", "constraints", "envelopes")
    frame_residuals: bool = True
    allow_low_dim: bool = False

    def validate(self):
        self.data.validate()
        for e in self.emit:
            if e not in EMIT_KINDS:
                raise ConfigError(f"unknown emit kind {e!r}")
        if self.grid_d < 4 and not self.allow_low_dim:
            raise ConfigError(
                f"d = {self.grid_d} is outside the validated regime (d >= 4); "
                "pass allow_low_dim = true to run anyway")
        if self.scheme not in ("ifrk4", "picard-global"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")

    def make_grid(self) -> Grid:
        return make_grid(self.grid_d, self.grid_n, self.grid_box_length,
                         self.grid_dealias_fraction)

    def sobolev_index(self) -> float:
        return self.s if self.s is not None else self.grid_d / 2 + 0.6

    def picard_config(self) -> PicardConfig:
        return PicardConfig(tol_rel=self.picard_tol_rel,
                            max_iter=self.picard_max_iter,
                            s=self.sobolev_index(), eps0=self.picard_eps0)

    def evolution_config(self) -> EvolutionConfig:
        return EvolutionConfig(dt=self.dt, t_end=self.t_end,
                               s=self.sobolev_index(),
                               stability_margin=self.stability_margin,
                               snapshot_stride=self.snapshot_stride,
                               picard=self.picard_config(), scheme=self.scheme,
                               emit_constraints="constraints" in self.emit)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["s"] = self.sobolev_index()
        out["emit"] = list(self.emit)
        out["data"]["mode"] = list(self.data.mode)
        return out


_KEYMAP = {
    "grid.d": ("grid_d", int),
    "grid.n": ("grid_n", int),
    "grid.box_length": ("grid_box_length", float),
    "grid.dealias_fraction": ("grid_dealias_fraction", float),
    "evolution.t_end": ("t_end", float),
    "evolution.dt": ("dt", float),
    "evolution.s": ("s", float),
    "evolution.stability_margin": ("stability_margin", float),
    "evolution.snapshot_stride": ("snapshot_stride", int),
    "evolution.scheme": ("scheme", str),
    "picard.tol_rel": ("picard_tol_rel", float),
    "picard.max_iter": ("picard_max_iter", int),
    "picard.eps0": ("picard_eps0", float),
    "output_dir": ("output_dir", str),
    "output.dir": ("output_dir", str),
    "allow_low_dim": ("allow_low_dim", lambda v: str(v).lower() in ("1", "true", "yes")),
}
_DATA_KEYS = {
    "data.kind": ("kind", str),
    "data.amplitude": ("amplitude", float),
    "data.width": ("width", float),
    "data.seed": ("seed", int),
}


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional TOML file plus dotted overrides."""
    cfg = RunConfig()
    merged: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = _toml.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
        for section, vals in doc.items():
            if isinstance(vals, dict):
                for key, v in vals.items():
                    merged[f"{section}.{key}"] = v
            else:
                merged[section] = vals
    if overrides:
        merged.update(overrides)
    for key, value in merged.items():
        if key in _KEYMAP:
            attr, conv = _KEYMAP[key]
            try:
                setattr(cfg, attr, conv(value))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        elif key in _DATA_KEYS:
            attr, conv = _DATA_KEYS[key]
            try:
                setattr(cfg.data, attr, conv(value))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        elif key == "data.mode":
            try:
                cfg.data.mode = tuple(int(v) for v in
                                      (value if isinstance(value, (list, tuple))
                                       else str(value).split(",")))
            except ValueError as exc:
                raise ConfigError(f"bad value for data.mode: {value!r}") from exc
        elif key in ("emit", "output.emit"):
            cfg.emit = tuple(value) if isinstance(value, (list, tuple)) \
                else tuple(v.strip() for v in str(value).split(","))
        elif key in ("frame_residuals", "output.frame_residuals"):
            cfg.frame_residuals = str(value).lower() in ("1", "true", "yes")
        else:
            raise ConfigError(f"unknown config key {key!r}")
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# initial data builders


def _spectral_bump(grid: Grid, width: float, center: np.ndarray) -> np.ndarray:
    """Mean-zero smooth bump built directly from Fourier coefficients."""
    mask = np.exp(-grid.xi_sq * width**2 / 2) * grid.dealias_mask
    mask.flat[0] = 0.0
    phase = np.ones(grid.shape, dtype=np.complex128)
    for a in range(grid.d):
        phase = phase * np.exp(-1j * grid.xi(a) * center[a])
    return grid.ifft(mask * phase)


def _band_limited_noise(grid: Grid, width: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coef *= np.exp(-grid.xi_sq * width**2 / 2) * grid.dealias_mask
    coef.flat[0] = 0.0
    f = grid.ifft(coef).real
    m = np.abs(f).max()
    return f / m if m > 0 else f


def build_initial_data(grid: Grid, spec: DataSpec, s: float):
    """Construct psi_0 (or the graph immersion) for the configured data kind.

    For psi-valued kinds the amplitude is the target ||psi_0||_{H^s}; for
    graph immersions it is the target ||grad h||_{H^s} of the induced metric.
    Returns ("psi", psi0) or ("immersion", Immersion).
    """
    spec.validate()
    if spec.kind == "zero":
        return "psi", np.zeros(grid.shape, dtype=np.complex128)
    if spec.kind == "gaussian-bump":
        center = np.full(grid.d, grid.L / 2)
        psi = _spectral_bump(grid, spec.width, center)
        hs = grid.sobolev_norm(psi, s)
        if hs == 0:
            raise ConfigError("bump construction produced an empty field; "
                              "width too large for this grid?")
        return "psi", (spec.amplitude / hs) * psi
    if spec.kind == "single-mode":
        mode = list(spec.mode) + [0] * (grid.d - len(spec.mode))
        psi = np.ones(grid.shape, dtype=np.complex128)
        for a in range(grid.d):
            psi = psi * np.exp(1j * (2 * np.pi / grid.L) * mode[a] * grid.coords(a))
        hs = grid.sobolev_norm(psi, s)
        return "psi", (spec.amplitude / hs) * psi
    if spec.kind == "graph-immersion":
        from .harmonic import graph_immersion, induced_metric
        f1 = _band_limited_noise(grid, spec.width, spec.seed)
        f2 = _band_limited_noise(grid, spec.width, spec.seed + 1)
        eps = 0.1
        for _ in range(4):
            imm = graph_immersion(grid, eps * f1, eps * f2)
            v = grid.sobolev_norm(induced_metric(imm).dg, s)
            if v == 0:
                break
            eps *= np.sqrt(spec.amplitude / v)
        return "immersion", graph_immersion(grid, eps * f1, eps * f2)
    raise ConfigError(f"unhandled data kind {spec.kind!r}")
