/** Deterministic SVG figure primitives (fixed float formatting, no RNG). */

export const WIDTH = 720;
export const HEIGHT = 480;
const MARGIN = { left: 70, right: 160, top: 40, bottom: 50 };

export function fmt(x: number): string {
  if (!isFinite(x)) return "0";
  if (x === 0) return "0";
  return Number(x.toPrecision(6)).toString();
}

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
];

export interface Series {
  name: string;
  x: number[];
  y: number[];
}

function niceTicks(lo: number, hi: number, count = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = (span / count) / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const start = Math.ceil(lo / s) * s;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += s) out.push(v);
  return out;
}

export function lineChart(series: Series[], opts: {
  title: string; xlabel: string; ylabel: string; logY?: boolean;
  guideY?: number;
}): string {
  const pts = series.flatMap((s) => s.y.map((v, i) => [s.x[i], v]));
  let xs = pts.map((p) => p[0]);
  let ys = pts.map((p) => p[1]);
  const logY = !!opts.logY;
  const tiny = 1e-300;
  if (logY) ys = ys.map((v) => Math.log10(Math.max(Math.abs(v), tiny)));
  if (opts.guideY !== undefined && logY) {
    ys = ys.concat([Math.log10(opts.guideY)]);
  }
  let xlo = Math.min(...xs), xhi = Math.max(...xs);
  let ylo = Math.min(...ys), yhi = Math.max(...ys);
  if (!(xhi > xlo)) { xhi = xlo + 1; }
  if (!(yhi > ylo)) { yhi = ylo + 1; ylo -= 1; }
  const pad = 0.05 * (yhi - ylo);
  ylo -= pad; yhi += pad;
  const iw = WIDTH - MARGIN.left - MARGIN.right;
  const ih = HEIGHT - MARGIN.top - MARGIN.bottom;
  const X = (x: number) => MARGIN.left + ((x - xlo) / (xhi - xlo)) * iw;
  const Y = (y: number) => MARGIN.top + ih - ((y - ylo) / (yhi - ylo)) * ih;
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
    `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`);
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="22" text-anchor="middle" ` +
    `font-family="sans-serif" font-size="16">${opts.title}</text>`);
  // axes
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${iw}" ` +
    `height="${ih}" fill="none" stroke="#333"/>`);
  for (const t of niceTicks(xlo, xhi)) {
    parts.push(`<line x1="${fmt(X(t))}" y1="${MARGIN.top + ih}" ` +
      `x2="${fmt(X(t))}" y2="${MARGIN.top + ih + 5}" stroke="#333"/>`);
    parts.push(`<text x="${fmt(X(t))}" y="${MARGIN.top + ih + 18}" ` +
      `text-anchor="middle" font-family="sans-serif" font-size="11">` +
      `${fmt(t)}</text>`);
  }
  for (const t of niceTicks(ylo, yhi)) {
    const label = logY ? `1e${fmt(t)}` : fmt(t);
    parts.push(`<line x1="${MARGIN.left - 5}" y1="${fmt(Y(t))}" ` +
      `x2="${MARGIN.left}" y2="${fmt(Y(t))}" stroke="#333"/>`);
    parts.push(`<text x="${MARGIN.left - 8}" y="${fmt(Y(t) + 4)}" ` +
      `text-anchor="end" font-family="sans-serif" font-size="11">` +
      `${label}</text>`);
  }
  parts.push(`<text x="${MARGIN.left + iw / 2}" y="${HEIGHT - 12}" ` +
    `text-anchor="middle" font-family="sans-serif" font-size="13">` +
    `${opts.xlabel}</text>`);
  parts.push(`<text x="18" y="${MARGIN.top + ih / 2}" text-anchor="middle" ` +
    `font-family="sans-serif" font-size="13" transform="rotate(-90 18 ` +
    `${MARGIN.top + ih / 2})">${opts.ylabel}</text>`);
  if (opts.guideY !== undefined) {
    const gy = logY ? Math.log10(opts.guideY) : opts.guideY;
    parts.push(`<line x1="${MARGIN.left}" y1="${fmt(Y(gy))}" ` +
      `x2="${MARGIN.left + iw}" y2="${fmt(Y(gy))}" stroke="#999" ` +
      `stroke-dasharray="6,4"/>`);
    parts.push(`<text x="${MARGIN.left + iw - 4}" y="${fmt(Y(gy) - 4)}" ` +
      `text-anchor="end" font-family="sans-serif" font-size="10" ` +
      `fill="#666">guide ${fmt(opts.guideY)}</text>`);
  }
  series.forEach((s, k) => {
    const color = PALETTE[k % PALETTE.length];
    const d = s.x.map((x, i) => {
      const yv = logY ? Math.log10(Math.max(Math.abs(s.y[i]), tiny)) : s.y[i];
      return `${i === 0 ? "M" : "L"}${fmt(X(x))},${fmt(Y(yv))}`;
    }).join(" ");
    parts.push(`<path d="${d}" fill="none" stroke="${color}" ` +
      `stroke-width="1.5"/>`);
    const ly = MARGIN.top + 14 + 16 * k;
    parts.push(`<line x1="${WIDTH - MARGIN.right + 10}" y1="${ly - 4}" ` +
      `x2="${WIDTH - MARGIN.right + 30}" y2="${ly - 4}" stroke="${color}" ` +
      `stroke-width="2"/>`);
    parts.push(`<text x="${WIDTH - MARGIN.right + 35}" y="${ly}" ` +
      `font-family="sans-serif" font-size="11">${s.name}</text>`);
  });
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

export function groupedBars(groups: Array<{ name: string; values: number[] }>,
                            labels: string[], opts: { title: string;
                              xlabel: string; ylabel: string }): string {
  const tiny = 1e-300;
  const logs = groups.flatMap((g) => g.values.map(
    (v) => Math.log10(Math.max(v, tiny))));
  let lo = Math.min(...logs, 0), hi = Math.max(...logs, 0);
  if (!(hi > lo)) { hi = lo + 1; }
  lo -= 0.5; hi += 0.5;
  const iw = WIDTH - MARGIN.left - MARGIN.right;
  const ih = HEIGHT - MARGIN.top - MARGIN.bottom;
  const nBars = labels.length * groups.length;
  const slot = iw / Math.max(labels.length, 1);
  const bw = Math.min(28, slot / (groups.length + 1));
  const Y = (v: number) => MARGIN.top + ih - ((v - lo) / (hi - lo)) * ih;
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
    `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`);
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="22" text-anchor="middle" ` +
    `font-family="sans-serif" font-size="16">${opts.title}</text>`);
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${iw}" ` +
    `height="${ih}" fill="none" stroke="#333"/>`);
  for (const t of niceTicks(lo, hi)) {
    parts.push(`<text x="${MARGIN.left - 8}" y="${fmt(Y(t) + 4)}" ` +
      `text-anchor="end" font-family="sans-serif" font-size="11">` +
      `1e${fmt(t)}</text>`);
  }
  labels.forEach((lab, i) => {
    const cx = MARGIN.left + slot * (i + 0.5);
    parts.push(`<text x="${fmt(cx)}" y="${MARGIN.top + ih + 18}" ` +
      `text-anchor="middle" font-family="sans-serif" font-size="11">` +
      `${lab}</text>`);
    groups.forEach((g, k) => {
      const v = Math.log10(Math.max(g.values[i] ?? tiny, tiny));
      const x = cx + (k - (groups.length - 1) / 2) * (bw + 2) - bw / 2;
      const y = Y(Math.max(v, lo));
      const h = MARGIN.top + ih - y;
      parts.push(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(bw)}" ` +
        `height="${fmt(Math.max(h, 0))}" fill="${PALETTE[k % PALETTE.length]}"/>`);
    });
  });
  groups.forEach((g, k) => {
    const ly = MARGIN.top + 14 + 16 * k;
    parts.push(`<rect x="${WIDTH - MARGIN.right + 10}" y="${ly - 10}" ` +
      `width="12" height="12" fill="${PALETTE[k % PALETTE.length]}"/>`);
    parts.push(`<text x="${WIDTH - MARGIN.right + 28}" y="${ly}" ` +
      `font-family="sans-serif" font-size="11">${g.name}</text>`);
  });
  parts.push(`<text x="${MARGIN.left + iw / 2}" y="${HEIGHT - 12}" ` +
    `text-anchor="middle" font-family="sans-serif" font-size="13">` +
    `${opts.xlabel}</text>`);
  parts.push(`<text x="18" y="${MARGIN.top + ih / 2}" text-anchor="middle" ` +
    `font-family="sans-serif" font-size="13" transform="rotate(-90 18 ` +
    `${MARGIN.top + ih / 2})">${opts.ylabel}</text>`);
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

/** Simple diverging-free sequential color ramp (deterministic). */
function heatColor(t: number): string {
  const c = Math.max(0, Math.min(1, t));
  const r = Math.round(255 * Math.min(1, 0.2 + 1.2 * c));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.5 * c - 0.2)));
  const b = Math.round(255 * Math.max(0, 0.6 - 0.6 * c + 0.4 * (1 - c)));
  return `rgb(${r},${g},${b})`;
}

export function heatmap(rows: number, cols: number, data: Float64Array,
                        opts: { title: string; xlabel: string;
                                ylabel: string }): string {
  let lo = Infinity, hi = -Infinity;
  for (const v of data) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (!(hi > lo)) hi = lo + 1;
  const iw = WIDTH - MARGIN.left - MARGIN.right;
  const ih = HEIGHT - MARGIN.top - MARGIN.bottom;
  const cw = iw / cols, ch = ih / rows;
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
    `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`);
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="22" text-anchor="middle" ` +
    `font-family="sans-serif" font-size="16">${opts.title}</text>`);
  for (let i = 0; i < rows; i++) {
    for (let j = 0; j < cols; j++) {
      const t = (data[i * cols + j] - lo) / (hi - lo);
      const x = MARGIN.left + j * cw;
      const y = MARGIN.top + (rows - 1 - i) * ch;
      parts.push(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(cw + 0.5)}" ` +
        `height="${fmt(ch + 0.5)}" fill="${heatColor(t)}"/>`);
    }
  }
  parts.push(`<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${iw}" ` +
    `height="${ih}" fill="none" stroke="#333"/>`);
  parts.push(`<text x="${MARGIN.left + iw / 2}" y="${HEIGHT - 12}" ` +
    `text-anchor="middle" font-family="sans-serif" font-size="13">` +
    `${opts.xlabel}</text>`);
  parts.push(`<text x="18" y="${MARGIN.top + ih / 2}" text-anchor="middle" ` +
    `font-family="sans-serif" font-size="13" transform="rotate(-90 18 ` +
    `${MARGIN.top + ih / 2})">${opts.ylabel}</text>`);
  parts.push(`<text x="${WIDTH - MARGIN.right + 10}" y="${MARGIN.top + 14}" ` +
    `font-family="sans-serif" font-size="11">max ${fmt(hi)}</text>`);
  parts.push(`<text x="${WIDTH - MARGIN.right + 10}" y="${MARGIN.top + 30}" ` +
    `font-family="sans-serif" font-size="11">min ${fmt(lo)}</text>`);
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
