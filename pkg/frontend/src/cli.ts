#!/usr/bin/env node
/**
 * smcf-plot <spec.json> [...more specs]
 * smcf-plot --roundtrip <in.smcf> <out.smcf>
 *
 * Renders simulator outputs to SVG, or re-serializes a snapshot (a format
 * self-check; the output must be byte-identical to the input).
 * Exit codes: 0 ok, 2 bad arguments/spec, 3 missing/corrupt input.
 */

import * as fs from "fs";

import { renderPlot, PlotSpec, PlotError, CsvError,
         SnapshotFormatError } from "./plots";
import { readSnapshot, writeSnapshot } from "./snapshot";

function fail(code: number, msg: string): number {
  process.stderr.write(JSON.stringify({ error: msg }) + "\n");
  return code;
}

export function main(argv: string[]): number {
  if (argv.length === 0) {
    return fail(2, "usage: smcf-plot <spec.json> | --roundtrip <in> <out>");
  }
  if (argv[0] === "--roundtrip") {
    if (argv.length !== 3) {
      return fail(2, "--roundtrip needs <in.smcf> <out.smcf>");
    }
    try {
      const snap = readSnapshot(fs.readFileSync(argv[1]));
      fs.writeFileSync(argv[2], writeSnapshot(snap));
    } catch (err) {
      if (err instanceof SnapshotFormatError) {
        return fail(3, `${argv[1]}: ${err.message}`);
      }
      return fail(3, String(err));
    }
    process.stdout.write(JSON.stringify({ ok: true }) + "\n");
    return 0;
  }
  for (const path of argv) {
    let spec: PlotSpec;
    try {
      spec = JSON.parse(fs.readFileSync(path, "utf-8"));
    } catch (err) {
      return fail(2, `cannot read spec ${path}: ${err}`);
    }
    if (!spec.kind || !spec.input || !spec.output) {
      return fail(2, `spec ${path} needs kind, input and output`);
    }
    try {
      const svg = renderPlot(spec);
      fs.writeFileSync(spec.output, svg);
      process.stdout.write(JSON.stringify(
        { ok: true, kind: spec.kind, output: spec.output }) + "\n");
    } catch (err) {
      if (err instanceof PlotError || err instanceof CsvError ||
          err instanceof SnapshotFormatError) {
        return fail(3, err.message);
      }
      throw err;
    }
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
