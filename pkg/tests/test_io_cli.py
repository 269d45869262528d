import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smcf.errors import IOFormatError
from smcf.grid import make_grid
from smcf.io import write_snapshot, read_snapshot, write_norms_csv, \
    write_constraints_csv

from conftest import rand_smooth, rand_sym2


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "smcf.cli", *args],
                          capture_output=True, text=True)


class TestSnapshot:
    def test_round_trip_bit_exact(self, grid2_small, tmp_path):
        g = grid2_small
        rng = np.random.default_rng(0)
        psi = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        h = rand_sym2(g, seed=1)
        fields = {"psi": ("scalar", psi), "h": ("sym2", h),
                  "V": ("vector", np.stack([rand_smooth(g, 2),
                                            rand_smooth(g, 3)]))}
        p1, p2 = tmp_path / "a.smcf", tmp_path / "b.smcf"
        write_snapshot(p1, g.spec, 0.125, fields)
        snap = read_snapshot(p1)
        write_snapshot(p2, g.spec, snap.time, snap.fields)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(snap.unpacked("psi"), psi)
        assert np.array_equal(snap.unpacked("h"), h)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10**6), time=st.floats(0, 10))
    def test_round_trip_random(self, seed, time, tmp_path_factory):
        g = make_grid(2, 8, 8.0)
        rng = np.random.default_rng(seed)
        f = rng.standard_normal((3,) + g.shape)
        p = tmp_path_factory.mktemp("snap") / "x.smcf"
        write_snapshot(p, g.spec, time, {"F": ("stack", f)})
        snap = read_snapshot(p)
        assert snap.time == time
        assert np.array_equal(snap.fields["F"][1], f)

    def test_truncated_file(self, grid2_small, tmp_path):
        p = tmp_path / "t.smcf"
        write_snapshot(p, grid2_small.spec, 0.0,
                       {"psi": ("scalar", np.zeros(grid2_small.shape))})
        raw = p.read_bytes()
        p.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(IOFormatError):
            read_snapshot(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.smcf"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(IOFormatError):
            read_snapshot(p)

    def test_version_mismatch(self, grid2_small, tmp_path):
        p = tmp_path / "v.smcf"
        write_snapshot(p, grid2_small.spec, 0.0,
                       {"psi": ("scalar", np.zeros(grid2_small.shape))})
        raw = bytearray(p.read_bytes())
        raw[4] = 99  # bump the little-endian version field
        p.write_bytes(bytes(raw))
        with pytest.raises(IOFormatError):
            read_snapshot(p)

    def test_little_endian_declared(self, grid2_small, tmp_path):
        # the header is defined little-endian regardless of host
        p = tmp_path / "le.smcf"
        write_snapshot(p, grid2_small.spec, 0.0,
                       {"psi": ("scalar", np.zeros(grid2_small.shape))})
        raw = p.read_bytes()
        assert raw[:4] == b"SMCF"
        assert int.from_bytes(raw[4:8], "little") == 1


class TestCSV:
    def test_norms_header_and_rows(self, tmp_path):
        p = tmp_path / "norms.csv"
        write_norms_csv(p, [(0.0, "a", 1.0), (0.5, "a", 2.0)])
        lines = p.read_text().strip().split("\n")
        assert lines[0] == "time,name,value"
        assert len(lines) == 3


class TestCLI:
    def test_missing_config_exit_2(self):
        r = run_cli("simulate", "--config", "/definitely/not/here.toml")
        assert r.returncode == 2
        rec = json.loads(r.stderr.strip().splitlines()[-1])
        assert rec["error"] == "ConfigError"

    def test_malformed_key_exit_2(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[grid]\nd = 2\nn = 16\nbogus_key = 1\n")
        r = run_cli("simulate", "--config", str(cfg))
        assert r.returncode == 2
        rec = json.loads(r.stderr.strip().splitlines()[-1])
        assert "bogus_key" in rec["message"]

    def test_low_dim_requires_flag(self):
        r = run_cli("simulate", "--grid.d", "2", "--evolution.t_end", "0.01",
                    "--evolution.dt", "0.005")
        assert r.returncode == 2

    def test_zero_run_and_overrides(self, tmp_path):
        out = tmp_path / "run"
        r = run_cli("simulate", "--grid.d", "2", "--grid.n", "8",
                    "--allow_low_dim", "true", "--data.kind", "zero",
                    "--evolution.t_end", "0.01", "--evolution.dt", "0.005",
                    "--evolution.snapshot_stride", "1",
                    "--output_dir", str(out))
        assert r.returncode == 0, r.stderr
        for name in ("norms.csv", "constraints.csv", "envelopes.csv",
                     "manifest.json", "state_initial.smcf",
                     "state_final.smcf"):
            assert (out / name).exists(), name
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["grid_n"] == 8
        norms = (out / "norms.csv").read_text().splitlines()
        vals = [float(line.split(",")[2]) for line in norms[1:]]
        assert max(vals) == 0.0

    def test_reproducibility(self, tmp_path):
        args = ["simulate", "--grid.d", "2", "--grid.n", "8",
                "--allow_low_dim", "true", "--data.kind", "gaussian-bump",
                "--data.amplitude", "0.01", "--data.seed", "7",
                "--evolution.t_end", "0.01", "--evolution.dt", "0.005",
                "--evolution.snapshot_stride", "1"]
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            r = run_cli(*args, "--output_dir", str(out))
            assert r.returncode == 0, r.stderr
            outs.append((out / "norms.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_gauge_solve_and_check_constraints(self, tmp_path):
        out = tmp_path / "gs"
        r = run_cli("gauge-solve", "--grid.d", "2", "--grid.n", "16",
                    "--allow_low_dim", "true", "--data.kind", "gaussian-bump",
                    "--data.amplitude", "0.01", "--output_dir", str(out))
        assert r.returncode == 0, r.stderr
        rec = json.loads(r.stdout)
        assert rec["max_rel_constraint"] < 1e-4
        r2 = run_cli("check-constraints", str(out / "gauge.smcf"),
                     "--out", str(out / "c2.csv"))
        assert r2.returncode == 0, r2.stderr
        assert json.loads(r2.stdout)["max_rel"] < 1e-4
        r3 = run_cli("norms", str(out / "gauge.smcf"),
                     "--out", str(out / "n.csv"))
        assert r3.returncode == 0
        assert (out / "n.csv").read_text().startswith("time,name,value")

    def test_harmonic_coords_command(self, tmp_path):
        out = tmp_path / "hc"
        r = run_cli("harmonic-coords", "--grid.d", "3", "--grid.n", "16",
                    "--allow_low_dim", "true", "--data.kind",
                    "graph-immersion", "--data.amplitude", "0.01",
                    "--output_dir", str(out))
        assert r.returncode == 0, r.stderr
        rec = json.loads(r.stdout)
        assert rec["harmonic_residual"] <= 1e-8
        assert (out / "harmonic_immersion.smcf").exists()

    def test_scaling_test_command(self):
        r = run_cli("scaling-test", "--grid.d", "2", "--grid.n", "8",
                    "--allow_low_dim", "true", "--data.kind", "gaussian-bump",
                    "--data.amplitude", "0.01", "--evolution.t_end", "0.01",
                    "--evolution.dt", "0.005")
        assert r.returncode == 0, r.stderr
        assert json.loads(r.stdout)["rel_l2"] <= 1e-6


class TestReconstructCLI:
    def test_reconstruct_graph_pipeline(self, tmp_path):
        out = tmp_path / "rec"
        r = run_cli("reconstruct", "--grid.d", "2", "--grid.n", "16",
                    "--allow_low_dim", "true", "--data.kind",
                    "graph-immersion", "--data.amplitude", "1e-3",
                    "--evolution.t_end", "0.01", "--evolution.dt", "0.005",
                    "--evolution.snapshot_stride", "1",
                    "--output_dir", str(out))
        assert r.returncode == 0, r.stderr
        rec = json.loads(r.stdout)
        assert rec["summary"]["smcf_residual_max"] < 1e-5
        assert (out / "smcf_residual.csv").exists()
        assert (out / "frame_final.smcf").exists()


class TestDataKinds:
    def test_single_mode(self, grid2):
        from smcf.config import DataSpec, build_initial_data
        kind, psi = build_initial_data(
            grid2, DataSpec(kind="single-mode", amplitude=0.02, mode=(1, 2)),
            1.6)
        assert kind == "psi"
        assert grid2.sobolev_norm(psi, 1.6) == pytest.approx(0.02, rel=1e-12)
        # single Fourier mode: spectrum supported at one lattice point
        spec = np.abs(grid2.fft(psi))
        assert (spec > 1e-12 * spec.max()).sum() == 1

    def test_zero_kind(self, grid2):
        from smcf.config import DataSpec, build_initial_data
        kind, psi = build_initial_data(grid2, DataSpec(kind="zero"), 1.6)
        assert kind == "psi" and np.abs(psi).max() == 0.0

    def test_bad_kind_rejected(self, grid2):
        from smcf.config import DataSpec, build_initial_data
        from smcf.errors import ConfigError
        with pytest.raises(ConfigError):
            build_initial_data(grid2, DataSpec(kind="nonsense"), 1.6)
