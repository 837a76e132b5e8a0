import type { VtkSnapshot } from "../src/vtk.js";

/** Structured quadratic-triangle snapshot over [-1,1]^2 with c = f(x,y). */
export function gridSnapshot(n: number, f: (x: number, y: number) => number): VtkSnapshot {
  const coords: number[] = [];
  const ids = new Map<string, number>();
  // quantize and kill negative zero, so -1+n*h and midpoint averages of the
  // same grid line always produce one node id
  const q = (v: number) => {
    const r = Math.round(v * 1e9) / 1e9;
    return Object.is(r, -0) ? 0 : r;
  };
  const node = (x: number, y: number): number => {
    const key = `${q(x)},${q(y)}`;
    let v = ids.get(key);
    if (v === undefined) {
      v = coords.length / 3;
      coords.push(x, y, 0);
      ids.set(key, v);
    }
    return v;
  };
  type P = [number, number];
  const cells: Int32Array[] = [];
  const tri = (p0: P, p1: P, p2: P) => {
    cells.push(Int32Array.from([
      node(...p0), node(...p1), node(...p2),
      node((p0[0] + p1[0]) / 2, (p0[1] + p1[1]) / 2),
      node((p1[0] + p2[0]) / 2, (p1[1] + p2[1]) / 2),
      node((p2[0] + p0[0]) / 2, (p2[1] + p0[1]) / 2),
    ]));
  };
  const h = 2 / n;
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const x0 = -1 + i * h, y0 = -1 + j * h;
      tri([x0 + h, y0], [x0 + h, y0 + h], [x0, y0]);
      tri([x0, y0 + h], [x0, y0], [x0 + h, y0 + h]);
    }
  }
  const npoints = coords.length / 3;
  const points = Float64Array.from(coords);
  const c = new Float64Array(npoints);
  for (let k = 0; k < npoints; k++) c[k] = f(points[3 * k], points[3 * k + 1]);
  return {
    title: "synthetic",
    points,
    npoints,
    cells,
    cellTypes: new Int32Array(cells.length).fill(22),
    scalars: new Map([["c", c]]),
    vectors: new Map([["u", new Float64Array(3 * npoints)]]),
  };
}

/** Two tanh drops of radius r with centers at (-sep,sep) and (sep,-sep). */
export function twoDrops(sep: number, r: number, eps: number) {
  const s = 2 * Math.SQRT2 * eps;
  return (x: number, y: number) =>
    0.5 * Math.tanh((Math.hypot(x + sep, y - sep) - r) / s) +
    0.5 * Math.tanh((Math.hypot(x - sep, y + sep) - r) / s);
}
