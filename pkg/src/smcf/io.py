"""Snapshot binary format and CSV/manifest writers.

Snapshot layout (all little-endian, independent of host byte order):

    bytes 0..3   magic "SMCF"
    u32          format version (1)
    u32          d
    u32          n (points per axis)
    f64          box_length
    f64          time
    u32          number of fields
    per field:   u16 name length, utf-8 name, u8 kind, u8 is_complex,
                 u32 component count, u64 payload offset (bytes)
    payload:     per field, components contiguous, each component a
                 row-major (C-order) n^d block of f64 (or c16 = two f64).

Symmetric 2-tensors store the packed upper triangle (row-major pairs).
Round trips are byte exact.
"""

from __future__ import annotations

import json
import struct
import sys
from dataclasses import dataclass

import numpy as np

from .errors import IOFormatError
from .grid import Grid, GridSpec, make_grid, sym_pack, sym_unpack

__all__ = ["Snapshot", "FIELD_KINDS", "write_snapshot", "read_snapshot",
           "write_norms_csv", "write_constraints_csv", "write_envelopes_csv",
           "write_manifest"]

MAGIC = b"SMCF"
VERSION = 1
FIELD_KINDS = {"scalar": 0, "vector": 1, "covector": 2, "sym2": 3, "full2": 4,
               "stack": 5}
_KIND_NAMES = {v: k for k, v in FIELD_KINDS.items()}


def _ncomp(kind: str, d: int) -> int:
    if kind == "scalar":
        return 1
    if kind in ("vector", "covector"):
        return d
    if kind == "sym2":
        return d * (d + 1) // 2
    if kind == "full2":
        return d * d
    raise IOFormatError(f"unknown field kind {kind!r}")


@dataclass
class Snapshot:
    d: int
    n: int
    box_length: float
    time: float
    fields: dict          # name -> (kind, array with component axes leading)

    def grid(self) -> Grid:
        return make_grid(self.d, self.n, self.box_length)

    def unpacked(self, name: str) -> np.ndarray:
        """Field with symmetric tensors expanded to full (d, d, ...) form."""
        kind, arr = self.fields[name]
        if kind == "sym2":
            return sym_unpack(arr, self.d)
        if kind == "scalar":
            return arr[0]
        return arr


def _pack_field(kind: str, arr: np.ndarray, d: int, shape: tuple) -> np.ndarray:
    if kind == "scalar":
        flat = arr.reshape((1,) + shape)
    elif kind in ("vector", "covector"):
        flat = arr.reshape((d,) + shape)
    elif kind == "sym2":
        if arr.shape[:2] == (d, d):
            arr = sym_pack(arr, d)
        flat = arr.reshape((d * (d + 1) // 2,) + shape)
    elif kind == "full2":
        flat = arr.reshape((d * d,) + shape)
    elif kind == "stack":
        flat = arr.reshape((-1,) + shape)
    else:
        raise IOFormatError(f"unknown field kind {kind!r}")
    return flat


def write_snapshot(path, grid_spec: GridSpec, time: float, fields: dict):
    """fields: name -> (kind, array).  Symmetric tensors may be full or packed."""
    d, n = grid_spec.d, grid_spec.n
    shape = grid_spec.shape
    header = bytearray()
    header += MAGIC
    header += struct.pack("<IIIdd", VERSION, d, n, grid_spec.box_length, time)
    header += struct.pack("<I", len(fields))
    blocks = []
    offset = 0
    for name, (kind, arr) in fields.items():
        flat = _pack_field(kind, np.asarray(arr), d, shape)
        is_complex = np.iscomplexobj(flat)
        dtype = "<c16" if is_complex else "<f8"
        data = np.ascontiguousarray(flat).astype(dtype, copy=False).tobytes()
        nb = name.encode("utf-8")
        header += struct.pack("<H", len(nb)) + nb
        header += struct.pack("<BBIQ", FIELD_KINDS[kind], int(is_complex),
                              flat.shape[0], offset)
        blocks.append(data)
        offset += len(data)
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(header))
            for b in blocks:
                fh.write(b)
    except OSError as exc:
        raise IOFormatError(f"cannot write snapshot {path}: {exc}") from exc


def read_snapshot(path) -> Snapshot:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IOFormatError(f"cannot read snapshot {path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise IOFormatError(f"{path}: bad magic; not an SMCF snapshot")
    pos = 4
    try:
        version, d, n, box_length, time = struct.unpack_from("<IIIdd", raw, pos)
        pos += struct.calcsize("<IIIdd")
        if version != VERSION:
            raise IOFormatError(f"{path}: format version {version} unsupported "
                                f"(expected {VERSION})")
        (nfields,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        entries = []
        for _ in range(nfields):
            (namelen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + namelen].decode("utf-8")
            pos += namelen
            kind_id, is_complex, ncomp, offset = struct.unpack_from("<BBIQ", raw, pos)
            pos += struct.calcsize("<BBIQ")
            entries.append((name, kind_id, is_complex, ncomp, offset))
    except struct.error as exc:
        raise IOFormatError(f"{path}: corrupt header ({exc})") from exc
    payload = raw[pos:]
    shape = (n,) * d
    npts = n**d
    fields = {}
    for name, kind_id, is_complex, ncomp, offset in entries:
        if kind_id not in _KIND_NAMES:
            raise IOFormatError(f"{path}: unknown field kind id {kind_id}")
        kind = _KIND_NAMES[kind_id]
        itemsize = 16 if is_complex else 8
        nbytes = ncomp * npts * itemsize
        if offset + nbytes > len(payload):
            raise IOFormatError(f"{path}: truncated payload for field {name!r}")
        dtype = "<c16" if is_complex else "<f8"
        arr = np.frombuffer(payload, dtype=dtype, count=ncomp * npts,
                            offset=offset).reshape((ncomp,) + shape).copy()
        fields[name] = (kind, arr)
    return Snapshot(d=d, n=n, box_length=box_length, time=time, fields=fields)


# ---------------------------------------------------------------------------
# CSV / manifest writers


def write_norms_csv(path, rows):
    """rows: iterable of (time, name, value); times ascending."""
    with open(path, "w") as fh:
        fh.write("time,name,value\n")
        for t, name, v in rows:
            fh.write(f"{t:.17g},{name},{v:.17g}\n")


def write_constraints_csv(path, rows):
    """rows: iterable of (time, ConstraintReport)."""
    with open(path, "w") as fh:
        fh.write("time,constraint_name,l2_residual,linf_residual\n")
        for t, rep in rows:
            for name in rep.names():
                l2, linf, _ = rep.entries[name]
                fh.write(f"{t:.17g},{name},{l2:.17g},{linf:.17g}\n")


def write_envelopes_csv(path, envelopes: dict, times: dict):
    """envelopes: label -> FrequencyEnvelope; times: label -> time."""
    with open(path, "w") as fh:
        fh.write("time,shell,value\n")
        for label, env in envelopes.items():
            t = times[label]
            for j, v in enumerate(env.values):
                fh.write(f"{t:.17g},{j},{v:.17g}\n")


def write_residuals_csv(path, series: dict):
    """series: name -> dict(times, l2, linf?, rel) arrays."""
    with open(path, "w") as fh:
        fh.write("time,name,l2,rel\n")
        for name, v in series.items():
            for i in range(len(v["times"])):
                fh.write(f"{v['times'][i]:.17g},{name},{v['l2'][i]:.17g},"
                         f"{v['rel'][i]:.17g}\n")


def write_manifest(path, config_dict: dict, extra: dict):
    import numpy
    import scipy
    from . import __version__
    doc = {
        "config": config_dict,
        "versions": {
            "smcf": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "byte_order": "little (format), host " + sys.byteorder,
    }
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
