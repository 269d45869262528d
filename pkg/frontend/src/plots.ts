/** The four figure kinds, each a pure function from input files to SVG. */

import * as fs from "fs";

import { parseCsv, column, groupSeries, CsvError } from "./csv";
import { readSnapshot, componentMagnitude, slice2d,
         SnapshotFormatError } from "./snapshot";
import { lineChart, groupedBars, heatmap, Series } from "./svg";

export interface PlotSpec {
  kind: "norms" | "residuals" | "envelope" | "slice";
  input: string;
  output: string;
  /** residuals: horizontal guide level (default 1e-5) */
  guide?: number;
  /** slice: field name, varying axes and pinned indices */
  field?: string;
  comp?: number;
  axes?: [number, number];
  index?: number[];
}

export class PlotError extends Error {}

function readText(path: string): string {
  try {
    return fs.readFileSync(path, "utf-8");
  } catch (err) {
    throw new PlotError(`missing input: ${path}`);
  }
}

function readBytes(path: string): Buffer {
  try {
    return fs.readFileSync(path);
  } catch (err) {
    throw new PlotError(`missing input: ${path}`);
  }
}

export function renderNorms(spec: PlotSpec): string {
  const table = parseCsv(readText(spec.input), spec.input);
  const t = column(table, "time", spec.input);
  const n = column(table, "name", spec.input);
  const v = column(table, "value", spec.input);
  const groups = groupSeries(table, n, t, v);
  const series: Series[] = [...groups.entries()].map(([name, s]) => ({
    name, x: s.x, y: s.y,
  }));
  return lineChart(series, { title: "norm time series", xlabel: "t",
                             ylabel: "value" });
}

export function renderResiduals(spec: PlotSpec): string {
  const table = parseCsv(readText(spec.input), spec.input);
  const t = column(table, "time", spec.input);
  const n = column(table, "constraint_name", spec.input);
  const v = column(table, "l2_residual", spec.input);
  const groups = groupSeries(table, n, t, v);
  const series: Series[] = [...groups.entries()]
    .filter(([name]) => !name.endsWith("_zeromode"))
    .map(([name, s]) => ({ name, x: s.x, y: s.y }));
  return lineChart(series, { title: "constraint residuals", xlabel: "t",
                             ylabel: "L2 residual", logY: true,
                             guideY: spec.guide ?? 1e-5 });
}

export function renderEnvelope(spec: PlotSpec): string {
  const table = parseCsv(readText(spec.input), spec.input);
  const t = column(table, "time", spec.input);
  const sh = column(table, "shell", spec.input);
  const v = column(table, "value", spec.input);
  const byTime = new Map<string, Map<number, number>>();
  for (const row of table.rows) {
    const key = row[t];
    if (!byTime.has(key)) byTime.set(key, new Map());
    byTime.get(key)!.set(Number(row[sh]), Number(row[v]));
  }
  const shells = [...new Set(table.rows.map((r) => Number(r[sh])))]
    .sort((a, b) => a - b);
  const groups = [...byTime.entries()].map(([time, m]) => ({
    name: `t = ${time}`,
    values: shells.map((j) => m.get(j) ?? 0),
  }));
  return groupedBars(groups, shells.map((j) => `j=${j}`),
                     { title: "frequency envelopes", xlabel: "shell",
                       ylabel: "a_j" });
}

export function renderSlice(spec: PlotSpec): string {
  const snap = readSnapshot(readBytes(spec.input));
  const name = spec.field ?? "psi";
  const field = snap.fields.find((f) => f.name === name);
  if (!field) {
    throw new PlotError(
      `field "${name}" not in snapshot (has: ` +
      snap.fields.map((f) => f.name).join(", ") + ")");
  }
  const mag = componentMagnitude(snap, field, spec.comp ?? 0);
  const [a0, a1] = spec.axes ?? [0, 1];
  const pin = spec.index ?? new Array(Math.max(snap.d - 2, 0)).fill(
    Math.floor(snap.n / 2));
  const sl = snap.d === 2 && a0 === 0 && a1 === 1
    ? { rows: snap.n, cols: snap.n, data: mag }
    : slice2d(mag, snap.d, snap.n, a0, a1, pin);
  return heatmap(sl.rows, sl.cols, sl.data, {
    title: `|${name}| slice (t = ${snap.time})`,
    xlabel: `x${a1 + 1}`, ylabel: `x${a0 + 1}`,
  });
}

export function renderPlot(spec: PlotSpec): string {
  switch (spec.kind) {
    case "norms": return renderNorms(spec);
    case "residuals": return renderResiduals(spec);
    case "envelope": return renderEnvelope(spec);
    case "slice": return renderSlice(spec);
    default:
      throw new PlotError(`unknown plot kind "${(spec as PlotSpec).kind}"`);
  }
}

export { CsvError, SnapshotFormatError };
