import * as fs from "fs";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { readSnapshot, writeSnapshot, componentMagnitude, slice2d,
         SnapshotFormatError, FieldKind } from "../src/snapshot";

const FIX = path.join(__dirname, "fixtures", "run");

describe("snapshot binary format", () => {
  it("round-trips the golden files bit-exactly", () => {
    for (const name of ["state_initial.smcf", "state_final.smcf"]) {
      const raw = fs.readFileSync(path.join(FIX, name));
      const snap = readSnapshot(raw);
      const out = writeSnapshot(snap);
      expect(Buffer.compare(out, raw)).toBe(0);
    }
  });

  it("parses grid metadata and field table", () => {
    const snap = readSnapshot(
      fs.readFileSync(path.join(FIX, "state_final.smcf")));
    expect(snap.d).toBe(2);
    expect(snap.n).toBe(16);
    expect(snap.boxLength).toBeCloseTo(16.0, 12);
    const names = snap.fields.map((f) => f.name);
    expect(names).toEqual(["psi", "lambda", "h", "V", "A", "B"]);
    const psi = snap.fields[0];
    expect(psi.isComplex).toBe(true);
    expect(psi.kind).toBe(FieldKind.Scalar);
    expect(psi.ncomp).toBe(1);
    const lam = snap.fields[1];
    expect(lam.kind).toBe(FieldKind.Sym2);
    expect(lam.ncomp).toBe(3); // packed upper triangle at d = 2
  });

  it("rejects bad magic", () => {
    const buf = Buffer.concat([Buffer.from("NOPE"), Buffer.alloc(64)]);
    expect(() => readSnapshot(buf)).toThrow(SnapshotFormatError);
  });

  it("rejects truncated payloads", () => {
    const raw = fs.readFileSync(path.join(FIX, "state_final.smcf"));
    const cut = raw.subarray(0, raw.length - 16);
    expect(() => readSnapshot(cut)).toThrow(/truncated/);
  });

  it("rejects unknown versions", () => {
    const raw = Buffer.from(fs.readFileSync(path.join(FIX, "state_final.smcf")));
    raw.writeUInt32LE(42, 4);
    expect(() => readSnapshot(raw)).toThrow(/version/);
  });

  it("computes magnitudes and slices", () => {
    const snap = readSnapshot(
      fs.readFileSync(path.join(FIX, "state_final.smcf")));
    const psi = snap.fields[0];
    const mag = componentMagnitude(snap, psi, 0);
    expect(mag.length).toBe(16 * 16);
    expect(Math.max(...mag)).toBeGreaterThan(0);
    const sl = slice2d(mag, 2, 16, 0, 1, []);
    expect(sl.rows).toBe(16);
    expect(sl.data[0]).toBe(mag[0]);
  });
});
