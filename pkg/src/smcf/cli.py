"""Command-line interface.

Subcommands: simulate, gauge-solve, harmonic-coords, norms, check-constraints,
reconstruct, scaling-test, convergence-test.  Configuration comes from an
optional TOML file plus dotted-key flags mirroring the config schema
(``--grid.n 16`` style).  Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 io failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig, load_config, build_initial_data, _KEYMAP, _DATA_KEYS
from .errors import ConfigError, NumericalError, IOFormatError, SMCFError

_ALL_KEYS = list(_KEYMAP) + list(_DATA_KEYS) + \
    ["data.mode", "emit", "frame_residuals"]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="TOML config file")
    for key in _ALL_KEYS:
        p.add_argument(f"--{key}", dest=f"opt_{key}", default=None,
                       metavar="V", help=argparse.SUPPRESS)


def _collect(args) -> RunConfig:
    overrides = {}
    for key in _ALL_KEYS:
        v = getattr(args, f"opt_{key}", None)
        if v is not None:
            overrides[key] = v
    return load_config(args.config, overrides)


def _fail(exc: Exception, code: int) -> int:
    record = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    from .pipeline import run_simulation
    cfg = _collect(args)
    summary = run_simulation(cfg)
    print(json.dumps({"ok": True, "summary": summary}, default=float))
    return 0


def cmd_gauge_solve(args) -> int:
    from .gauge import picard_solve_gauge, constraint_residuals
    from . import io as sio
    cfg = _collect(args)
    grid = cfg.make_grid()
    kind, data = build_initial_data(grid, cfg.data, cfg.sobolev_index())
    if kind != "psi":
        raise ConfigError("gauge-solve needs a psi-valued data kind")
    S, trace = picard_solve_gauge(grid, data, cfg.picard_config())
    rep = constraint_residuals(S, data)
    os.makedirs(cfg.output_dir, exist_ok=True)
    sio.write_snapshot(os.path.join(cfg.output_dir, "gauge.smcf"), grid.spec,
                       0.0, {"psi": ("scalar", data),
                             "lambda": ("sym2", S.lam), "h": ("sym2", S.h),
                             "V": ("vector", S.V), "A": ("covector", S.A),
                             "B": ("scalar", S.B)})
    sio.write_constraints_csv(os.path.join(cfg.output_dir, "constraints.csv"),
                              [(0.0, rep)])
    print(json.dumps({"ok": True, "iterations": int(trace["iterations"]),
                      "max_rel_constraint": rep.max_rel(
                          ["c1", "c2", "c3", "c4", "c5", "c6", "c7"])}))
    return 0


def cmd_harmonic_coords(args) -> int:
    from .harmonic import phi_solve, apply_coordinate_change, harmonic_residual, \
        induced_metric
    from . import io as sio
    cfg = _collect(args)
    if cfg.data.kind != "graph-immersion":
        raise ConfigError("harmonic-coords needs data.kind = graph-immersion")
    grid = cfg.make_grid()
    _, imm = build_initial_data(grid, cfg.data, cfg.sobolev_index())
    cc = phi_solve(imm, cfg.picard_config())
    imm2 = apply_coordinate_change(imm, cc)
    resid = harmonic_residual(imm2)
    os.makedirs(cfg.output_dir, exist_ok=True)
    sio.write_snapshot(os.path.join(cfg.output_dir, "harmonic_immersion.smcf"),
                       grid.spec, 0.0,
                       {"phi": ("vector", cc.phi),
                        "h_tilde": ("sym2", induced_metric(imm2).h),
                        "F_periodic": ("stack", imm2.periodic)})
    print(json.dumps({"ok": True, "iterations": cc.iterations,
                      "harmonic_residual": resid}))
    return 0


def cmd_norms(args) -> int:
    from . import io as sio
    from .spaces import gauge_norm_hs
    from .gauge import GaugeState
    cfg_s = None
    rows = []
    for path in args.snapshots:
        snap = sio.read_snapshot(path)
        grid = snap.grid()
        s = cfg_s if cfg_s is not None else grid.d / 2 + 0.6
        if "psi" in snap.fields:
            psi = snap.unpacked("psi")
            rows.append((snap.time, "psi_l2", grid.l2(psi)))
            rows.append((snap.time, "psi_hs", grid.sobolev_norm(psi, s)))
        gauge_names = ("lambda", "h", "V", "A", "B")
        if all(nm in snap.fields for nm in gauge_names):
            S = GaugeState(grid, snap.unpacked("lambda"), snap.unpacked("h"),
                           snap.unpacked("V"), snap.unpacked("A"),
                           snap.unpacked("B"))
            rows.append((snap.time, "gauge_hs", gauge_norm_hs(S, s)))
    out = args.out or "norms.csv"
    sio.write_norms_csv(out, rows)
    print(json.dumps({"ok": True, "rows": len(rows), "out": out}))
    return 0


def cmd_check_constraints(args) -> int:
    from . import io as sio
    from .gauge import GaugeState, constraint_residuals
    rows = []
    worst = 0.0
    for path in args.snapshots:
        snap = sio.read_snapshot(path)
        grid = snap.grid()
        S = GaugeState(grid, snap.unpacked("lambda"), snap.unpacked("h"),
                       snap.unpacked("V"), snap.unpacked("A"),
                       snap.unpacked("B"))
        rep = constraint_residuals(S, snap.unpacked("psi"))
        rows.append((snap.time, rep))
        worst = max(worst, rep.max_rel(["c1", "c2", "c3", "c4", "c5", "c6", "c7"]))
    out = args.out or "constraints.csv"
    sio.write_constraints_csv(out, rows)
    print(json.dumps({"ok": True, "max_rel": worst, "out": out}))
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _collect(args)
    if cfg.data.kind != "graph-immersion":
        raise ConfigError("reconstruct needs data.kind = graph-immersion")
    cfg.frame_residuals = True
    from .pipeline import run_simulation
    summary = run_simulation(cfg)
    print(json.dumps({"ok": True, "summary": summary}, default=float))
    return 0


def cmd_scaling_test(args) -> int:
    from .verification import scaling_pair
    cfg = _collect(args)
    out = scaling_pair(cfg, lam=args.lam)
    ok = out["rel_l2"] <= args.tol
    print(json.dumps({"ok": ok, **out}))
    return 0 if ok else 3


def cmd_convergence_test(args) -> int:
    from .verification import richardson_triple
    cfg = _collect(args)
    out = richardson_triple(cfg)
    ok = args.lo <= out["ratio"] <= args.hi
    print(json.dumps({"ok": ok, **out}))
    return 0 if ok else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smcf",
        description="Pseudospectral skew mean curvature flow in the good gauge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the configured pipeline")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gauge-solve", help="fixed-time elliptic solve for psi_0")
    _add_common(p)
    p.set_defaults(func=cmd_gauge_solve)

    p = sub.add_parser("harmonic-coords",
                       help="harmonic coordinates for a graph immersion")
    _add_common(p)
    p.set_defaults(func=cmd_harmonic_coords)

    p = sub.add_parser("norms", help="norms of stored snapshots")
    p.add_argument("snapshots", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("check-constraints",
                       help="constraint residuals of stored gauge snapshots")
    p.add_argument("snapshots", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check_constraints)

    p = sub.add_parser("reconstruct",
                       help="surface reconstruction for graph-immersion data")
    _add_common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("scaling-test", help="lam-rescaled twin-run comparison")
    _add_common(p)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_scaling_test)

    p = sub.add_parser("convergence-test", help="Richardson dt/dt2/dt4 ratio")
    _add_common(p)
    p.add_argument("--lo", type=float, default=12.0)
    p.add_argument("--hi", type=float, default=20.0)
    p.set_defaults(func=cmd_convergence_test)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(exc, 2)
    except NumericalError as exc:
        return _fail(exc, 3)
    except IOFormatError as exc:
        return _fail(exc, 4)
    except SMCFError as exc:
        return _fail(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
