/** Minimal CSV handling for the simulator's output tables (no quoting). */

export class CsvError extends Error {}

export interface CsvTable {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string, path = "<csv>"): CsvTable {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new CsvError(`${path}: empty file`);
  }
  const header = lines[0].split(",");
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== header.length) {
      throw new CsvError(
        `${path}: row ${i + 1} has ${parts.length} columns, ` +
        `expected ${header.length}`);
    }
    rows.push(parts);
  }
  return { header, rows };
}

export function column(table: CsvTable, name: string, path = "<csv>"): number {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new CsvError(`${path}: missing column "${name}"`);
  }
  return idx;
}

/** Group numeric (x, y) series by a key column. */
export function groupSeries(table: CsvTable, keyCol: number, xCol: number,
                            yCol: number): Map<string, { x: number[];
                                                         y: number[] }> {
  const out = new Map<string, { x: number[]; y: number[] }>();
  for (const row of table.rows) {
    const key = row[keyCol];
    let slot = out.get(key);
    if (!slot) {
      slot = { x: [], y: [] };
      out.set(key, slot);
    }
    slot.x.push(Number(row[xCol]));
    slot.y.push(Number(row[yCol]));
  }
  return out;
}
