/** The three plot products. Pure views of solver outputs: CSV and VTK in,
 * SVG out, no physics recomputed here. */

import { readFileSync, writeFileSync } from "fs";
import { parseTimeseries, Timeseries } from "./csv.js";
import { parseVtk, VtkSnapshot } from "./vtk.js";
import { contourLoops, subTriangles, Loop } from "./contour.js";
import { linePlot, LinePlot, esc } from "./svg.js";

function readSeries(paths: string[]): Timeseries[] {
  return paths.map((p) => {
    const ts = parseTimeseries(readFileSync(p, "utf8"), p);
    if (ts.rows.length === 0) throw new Error(`${p}: no data rows`);
    return ts;
  });
}

export interface EnergyPlotResult {
  plot: LinePlot;
  labels: string[];
  /** E_total at t=0 per input, in input order */
  initialEnergies: number[];
}

export function plotEnergy(
  csvPaths: string[],
  out: string,
  opts: { components?: boolean } = {},
): EnergyPlotResult {
  const inputs = readSeries(csvPaths);
  const series = inputs.map((ts) => ({
    x: ts.column("t"),
    y: ts.column("E_total"),
    label: ts.label,
  }));
  if (opts.components) {
    for (const ts of inputs) {
      for (const name of ["E_kin", "E_mix", "E_grad", "E_pot"] as const) {
        series.push({ x: ts.column("t"), y: ts.column(name), label: `${ts.label} ${name}` });
      }
    }
  }
  const plot = linePlot(series, { title: "total energy", xlabel: "t", ylabel: "E" });
  writeFileSync(out, plot.svg);
  return {
    plot,
    labels: inputs.map((ts) => ts.label),
    initialEnergies: inputs.map((ts) => ts.column("E_total")[0]),
  };
}

export interface VolumePlotResult {
  plot: LinePlot;
  labels: string[];
}

export function plotVolume(csvPaths: string[], out: string): VolumePlotResult {
  const inputs = readSeries(csvPaths);
  for (const [k, ts] of inputs.entries()) {
    if (ts.column("volume").some((v) => Number.isNaN(v)) || ts.column("t").some((v) => Number.isNaN(v))) {
      throw new Error(`${csvPaths[k]}: NaN rows in volume series`);
    }
  }
  const series = inputs.map((ts) => ({ x: ts.column("t"), y: ts.column("volume"), label: ts.label }));
  // a well-conserved volume trace is flat; keep a visible band around it
  const mean = series[0].y.reduce((a, b) => a + b, 0) / series[0].y.length;
  const plot = linePlot(series, {
    title: "phase volume", xlabel: "t", ylabel: "integral of c",
    yMinSpan: Math.max(1e-2 * Math.abs(mean), 1e-6),
  });
  writeFileSync(out, plot.svg);
  return { plot, labels: inputs.map((ts) => ts.label) };
}

export interface InterfacePlotResult {
  loops: Loop[];
  closedLoops: number;
  warning?: string;
}

const STOPS: Array<[number, number, number]> = [
  [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
];

function colormap(t: number): string {
  const s = Math.min(Math.max(t, 0), 1) * (STOPS.length - 1);
  const k = Math.min(Math.floor(s), STOPS.length - 2);
  const w = s - k;
  const c = STOPS[k].map((v, j) => Math.round(v + w * (STOPS[k + 1][j] - v)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

export function plotInterface(
  vtkPath: string,
  out: string,
  opts: { background?: "div_u" | "speed"; glyphEvery?: number } = {},
): InterfacePlotResult {
  const snap = parseVtk(readFileSync(vtkPath, "utf8"), vtkPath);
  const field = opts.background ?? "div_u";
  if (!snap.scalars.has("c")) throw new Error(`${vtkPath}: missing scalar field c`);
  const u = snap.vectors.get("u");
  if (!u) throw new Error(`${vtkPath}: missing vector field u`);
  let bg: Float64Array;
  if (field === "speed") {
    bg = new Float64Array(snap.npoints);
    for (let n = 0; n < snap.npoints; n++) bg[n] = Math.hypot(u[3 * n], u[3 * n + 1]);
  } else {
    const d = snap.scalars.get("div_u");
    if (!d) throw new Error(`${vtkPath}: missing scalar field div_u`);
    bg = d;
  }

  const xs = Array.from({ length: snap.npoints }, (_, n) => snap.points[3 * n]);
  const ys = Array.from({ length: snap.npoints }, (_, n) => snap.points[3 * n + 1]);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = Math.min(...ys), y1 = Math.max(...ys);
  const W = 640, H = 640, M = 40;
  const px = (x: number) => M + ((x - x0) / (x1 - x0)) * (W - 2 * M);
  const py = (y: number) => H - M - ((y - y0) / (y1 - y0)) * (H - 2 * M);

  let lo = Infinity, hi = -Infinity;
  for (const v of bg) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const norm = (v: number) => (hi > lo ? (v - lo) / (hi - lo) : 0.5);

  const el: string[] = [];
  el.push(`<rect x="0" y="0" width="${W}" height="${H}" fill="white"/>`);
  for (const cell of snap.cells) {
    for (const tri of subTriangles(cell)) {
      const mean = (bg[tri[0]] + bg[tri[1]] + bg[tri[2]]) / 3;
      const pts = tri.map((n) => `${px(xs[n]).toFixed(1)},${py(ys[n]).toFixed(1)}`).join(" ");
      el.push(`<polygon points="${pts}" fill="${colormap(norm(mean))}" stroke="none"/>`);
    }
  }

  const loops = contourLoops(snap, "c", 0.5);
  let warning: string | undefined;
  if (loops.length === 0) {
    warning = `no c=0.5 contour found in ${vtkPath} (uniform phase field?)`;
    console.warn(warning);
  }
  for (const loop of loops) {
    const pts = loop.xy.map(([x, y]) => `${px(x).toFixed(2)},${py(y).toFixed(2)}`).join(" ");
    el.push(`<polyline points="${pts}" fill="none" stroke="black" stroke-width="1.8"/>`);
  }

  // velocity glyphs on a thinned set of vertices
  let umax = 0;
  for (let n = 0; n < snap.npoints; n++) umax = Math.max(umax, Math.hypot(u[3 * n], u[3 * n + 1]));
  if (umax > 0) {
    const every = opts.glyphEvery ?? 37;
    const scale = 0.08 * Math.min(x1 - x0, y1 - y0) / umax;
    for (let n = 0; n < snap.npoints; n += every) {
      const ux = u[3 * n], uy = u[3 * n + 1];
      const speed = Math.hypot(ux, uy);
      if (speed < 1e-3 * umax) continue;
      const ax = px(xs[n]), ay = py(ys[n]);
      const bx2 = px(xs[n] + scale * ux), by2 = py(ys[n] + scale * uy);
      el.push(`<line x1="${ax.toFixed(1)}" y1="${ay.toFixed(1)}" x2="${bx2.toFixed(1)}" y2="${by2.toFixed(1)}" stroke="#333" stroke-width="0.8"/>`);
      el.push(`<circle cx="${bx2.toFixed(1)}" cy="${by2.toFixed(1)}" r="1.2" fill="#333"/>`);
    }
  }
  el.push(`<text x="${W / 2}" y="${H - 12}" font-size="12" text-anchor="middle">${esc(`${snap.title} | background: ${field} [${lo.toExponential(2)}, ${hi.toExponential(2)}]`)}</text>`);

  const svg = `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">\n${el.join("\n")}\n</svg>\n`;
  writeFileSync(out, svg);
  return { loops, closedLoops: loops.filter((l) => l.closed).length, warning };
}
