/** Small SVG chart builder: line plots with axes and raw element helpers. */

export interface Series {
  x: number[];
  y: number[];
  label?: string;
  color?: string;
}

export interface LinePlotOptions {
  title?: string;
  xlabel?: string;
  ylabel?: string;
  width?: number;
  height?: number;
  /** keep the y-range at least this wide, centered on the data midpoint */
  yMinSpan?: number;
}

export interface LinePlot {
  svg: string;
  xlim: [number, number];
  ylim: [number, number];
  /** per series, points mapped to pixel coordinates (SVG y grows downward) */
  pixels: Array<Array<[number, number]>>;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const MARGIN = { l: 64, r: 14, t: 28, b: 42 };

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const err = span / (n * step);
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * span; v += s) ticks.push(v);
  return ticks;
}

const fmt = (v: number) => {
  if (v === 0) return "0";
  const a = Math.abs(v);
  return a >= 1e4 || a < 1e-3 ? v.toExponential(2) : String(parseFloat(v.toPrecision(5)));
};

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function linePlot(series: Series[], opts: LinePlotOptions = {}): LinePlot {
  const W = opts.width ?? 640;
  const H = opts.height ?? 420;
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y);
  if (xs.length === 0) throw new Error("no data to plot");
  let x0 = Math.min(...xs), x1 = Math.max(...xs);
  let y0 = Math.min(...ys), y1 = Math.max(...ys);
  if (x1 === x0) { x0 -= 0.5; x1 += 0.5; }
  const pad = 0.05 * (y1 - y0 || Math.abs(y0) || 1);
  y0 -= pad; y1 += pad;
  if (opts.yMinSpan && y1 - y0 < opts.yMinSpan) {
    const c = 0.5 * (y0 + y1);
    y0 = c - opts.yMinSpan / 2;
    y1 = c + opts.yMinSpan / 2;
  }
  const px = (x: number) => MARGIN.l + ((x - x0) / (x1 - x0)) * (W - MARGIN.l - MARGIN.r);
  const py = (y: number) => H - MARGIN.b - ((y - y0) / (y1 - y0)) * (H - MARGIN.t - MARGIN.b);

  const el: string[] = [];
  el.push(`<rect x="0" y="0" width="${W}" height="${H}" fill="white"/>`);
  for (const t of niceTicks(x0, x1)) {
    el.push(`<line x1="${px(t)}" y1="${H - MARGIN.b}" x2="${px(t)}" y2="${MARGIN.t}" stroke="#eee"/>`);
    el.push(`<text x="${px(t)}" y="${H - MARGIN.b + 16}" font-size="11" text-anchor="middle">${fmt(t)}</text>`);
  }
  for (const t of niceTicks(y0, y1)) {
    el.push(`<line x1="${MARGIN.l}" y1="${py(t)}" x2="${W - MARGIN.r}" y2="${py(t)}" stroke="#eee"/>`);
    el.push(`<text x="${MARGIN.l - 6}" y="${py(t) + 4}" font-size="11" text-anchor="end">${fmt(t)}</text>`);
  }
  el.push(`<rect x="${MARGIN.l}" y="${MARGIN.t}" width="${W - MARGIN.l - MARGIN.r}" height="${H - MARGIN.t - MARGIN.b}" fill="none" stroke="black"/>`);

  const pixels: Array<Array<[number, number]>> = [];
  series.forEach((s, k) => {
    const color = s.color ?? PALETTE[k % PALETTE.length];
    const pts: Array<[number, number]> = s.x.map((x, j) => [px(x), py(s.y[j])]);
    pixels.push(pts);
    el.push(`<polyline fill="none" stroke="${color}" stroke-width="1.6" points="${pts.map((p) => p.map((v) => v.toFixed(2)).join(",")).join(" ")}"/>`);
    if (s.label) {
      const yk = MARGIN.t + 16 + 16 * k;
      el.push(`<line x1="${W - MARGIN.r - 150}" y1="${yk - 4}" x2="${W - MARGIN.r - 126}" y2="${yk - 4}" stroke="${color}" stroke-width="2"/>`);
      el.push(`<text x="${W - MARGIN.r - 120}" y="${yk}" font-size="12">${esc(s.label)}</text>`);
    }
  });

  if (opts.title) el.push(`<text x="${W / 2}" y="18" font-size="14" text-anchor="middle">${esc(opts.title)}</text>`);
  if (opts.xlabel) el.push(`<text x="${(MARGIN.l + W - MARGIN.r) / 2}" y="${H - 8}" font-size="12" text-anchor="middle">${esc(opts.xlabel)}</text>`);
  if (opts.ylabel) el.push(`<text x="14" y="${(MARGIN.t + H - MARGIN.b) / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 ${(MARGIN.t + H - MARGIN.b) / 2})">${esc(opts.ylabel)}</text>`);

  const svg = `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">\n${el.join("\n")}\n</svg>\n`;
  return { svg, xlim: [x0, x1], ylim: [y0, y1], pixels };
}
