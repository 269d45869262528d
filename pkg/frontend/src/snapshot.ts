/**
 * Reader/writer for the simulator's binary snapshot format.
 *
 * Layout (all little-endian):
 *   bytes 0..3  magic "SMCF"
 *   u32 version (1), u32 d, u32 n, f64 box_length, f64 time, u32 nfields
 *   per field: u16 name length, utf-8 name, u8 kind, u8 is_complex,
 *              u32 component count, u64 payload offset
 *   payload: per field, components contiguous, row-major f64 (or pairs of
 *            f64 for complex), n^d values per component.
 *
 * Round trips are byte exact: the writer lays fields out sequentially in
 * stored order, which is how the producer allocates offsets.
 */

export const MAGIC = "SMCF";
export const VERSION = 1;

export enum FieldKind {
  Scalar = 0,
  Vector = 1,
  Covector = 2,
  Sym2 = 3,
  Full2 = 4,
  Stack = 5,
}

export interface SnapshotField {
  name: string;
  kind: FieldKind;
  isComplex: boolean;
  ncomp: number;
  /** re/im interleaved when complex; length ncomp * n^d * (1|2) */
  data: Float64Array;
}

export interface Snapshot {
  d: number;
  n: number;
  boxLength: number;
  time: number;
  fields: SnapshotField[];
}

export class SnapshotFormatError extends Error {}

export function readSnapshot(buf: Buffer): Snapshot {
  if (buf.length < 4 || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new SnapshotFormatError("bad magic; not an SMCF snapshot");
  }
  let pos = 4;
  const need = (k: number) => {
    if (pos + k > buf.length) {
      throw new SnapshotFormatError("corrupt header: truncated file");
    }
  };
  need(4 + 4 + 4 + 8 + 8 + 4);
  const version = buf.readUInt32LE(pos); pos += 4;
  if (version !== VERSION) {
    throw new SnapshotFormatError(
      `format version ${version} unsupported (expected ${VERSION})`);
  }
  const d = buf.readUInt32LE(pos); pos += 4;
  const n = buf.readUInt32LE(pos); pos += 4;
  const boxLength = buf.readDoubleLE(pos); pos += 8;
  const time = buf.readDoubleLE(pos); pos += 8;
  const nfields = buf.readUInt32LE(pos); pos += 4;
  const entries: Array<{ name: string; kind: number; isComplex: boolean;
                         ncomp: number; offset: number }> = [];
  for (let i = 0; i < nfields; i++) {
    need(2);
    const nameLen = buf.readUInt16LE(pos); pos += 2;
    need(nameLen + 1 + 1 + 4 + 8);
    const name = buf.toString("utf-8", pos, pos + nameLen); pos += nameLen;
    const kind = buf.readUInt8(pos); pos += 1;
    const isComplex = buf.readUInt8(pos) !== 0; pos += 1;
    const ncomp = buf.readUInt32LE(pos); pos += 4;
    const offset = Number(buf.readBigUInt64LE(pos)); pos += 8;
    entries.push({ name, kind, isComplex, ncomp, offset });
  }
  const payloadStart = pos;
  const npts = n ** d;
  const fields: SnapshotField[] = [];
  for (const e of entries) {
    const vals = e.ncomp * npts * (e.isComplex ? 2 : 1);
    const begin = payloadStart + e.offset;
    if (begin + vals * 8 > buf.length) {
      throw new SnapshotFormatError(
        `truncated payload for field "${e.name}"`);
    }
    const data = new Float64Array(vals);
    for (let i = 0; i < vals; i++) {
      data[i] = buf.readDoubleLE(begin + 8 * i);
    }
    fields.push({ name: e.name, kind: e.kind as FieldKind,
                  isComplex: e.isComplex, ncomp: e.ncomp, data });
  }
  return { d, n, boxLength, time, fields };
}

export function writeSnapshot(snap: Snapshot): Buffer {
  const headParts: Buffer[] = [];
  headParts.push(Buffer.from(MAGIC, "ascii"));
  const fixed = Buffer.alloc(4 + 4 + 4 + 8 + 8 + 4);
  let p = 0;
  fixed.writeUInt32LE(VERSION, p); p += 4;
  fixed.writeUInt32LE(snap.d, p); p += 4;
  fixed.writeUInt32LE(snap.n, p); p += 4;
  fixed.writeDoubleLE(snap.boxLength, p); p += 8;
  fixed.writeDoubleLE(snap.time, p); p += 8;
  fixed.writeUInt32LE(snap.fields.length, p); p += 4;
  headParts.push(fixed);
  const payloads: Buffer[] = [];
  let offset = 0;
  for (const f of snap.fields) {
    const nameBytes = Buffer.from(f.name, "utf-8");
    const entry = Buffer.alloc(2 + nameBytes.length + 1 + 1 + 4 + 8);
    let q = 0;
    entry.writeUInt16LE(nameBytes.length, q); q += 2;
    nameBytes.copy(entry, q); q += nameBytes.length;
    entry.writeUInt8(f.kind, q); q += 1;
    entry.writeUInt8(f.isComplex ? 1 : 0, q); q += 1;
    entry.writeUInt32LE(f.ncomp, q); q += 4;
    entry.writeBigUInt64LE(BigInt(offset), q); q += 8;
    headParts.push(entry);
    const block = Buffer.alloc(f.data.length * 8);
    for (let i = 0; i < f.data.length; i++) {
      block.writeDoubleLE(f.data[i], 8 * i);
    }
    payloads.push(block);
    offset += block.length;
  }
  return Buffer.concat([...headParts, ...payloads]);
}

/** Magnitude of one component of a field over the full grid (n^d values). */
export function componentMagnitude(snap: Snapshot, field: SnapshotField,
                                   comp: number): Float64Array {
  const npts = snap.n ** snap.d;
  const out = new Float64Array(npts);
  if (field.isComplex) {
    const base = comp * npts * 2;
    for (let i = 0; i < npts; i++) {
      const re = field.data[base + 2 * i];
      const im = field.data[base + 2 * i + 1];
      out[i] = Math.hypot(re, im);
    }
  } else {
    const base = comp * npts;
    for (let i = 0; i < npts; i++) out[i] = Math.abs(field.data[base + i]);
  }
  return out;
}

/**
 * Extract a 2-d slice of a per-point array: grid axes (a0, a1) vary, all
 * other axes pinned at the given indices (row-major C order).
 */
export function slice2d(values: Float64Array, d: number, n: number,
                        a0: number, a1: number,
                        pin: number[]): { rows: number; cols: number;
                                          data: Float64Array } {
  if (a0 === a1 || a0 < 0 || a1 < 0 || a0 >= d || a1 >= d) {
    throw new SnapshotFormatError(`bad slice axes ${a0}, ${a1}`);
  }
  const stride = new Array(d).fill(1);
  for (let i = d - 2; i >= 0; i--) stride[i] = stride[i + 1] * n;
  let base = 0;
  let pinPos = 0;
  for (let ax = 0; ax < d; ax++) {
    if (ax === a0 || ax === a1) continue;
    const idx = pin[pinPos++] ?? 0;
    if (idx < 0 || idx >= n) {
      throw new SnapshotFormatError(`pin index ${idx} out of range`);
    }
    base += idx * stride[ax];
  }
  const out = new Float64Array(n * n);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      out[i * n + j] = values[base + i * stride[a0] + j * stride[a1]];
    }
  }
  return { rows: n, cols: n, data: out };
}
