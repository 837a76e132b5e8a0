/** Level-set extraction on quadratic triangle meshes.
 *
 * Each 6-node cell is split into its four vertex sub-triangles and the
 * level set of the linear interpolant is marched on those. Segments are
 * keyed by the cut mesh edge they end on, then chained into polylines;
 * a polyline is closed when the walk returns to its starting edge.
 */

import type { VtkSnapshot } from "./vtk.js";

export interface Loop {
  xy: Array<[number, number]>;
  closed: boolean;
}

/** corners a,b,c and midpoints m01,m12,m20 -> four linear sub-triangles */
export function subTriangles(cell: ArrayLike<number>): [number, number, number][] {
  const a = cell[0], b = cell[1], c = cell[2];
  const ab = cell[3], bc = cell[4], ca = cell[5];
  return [
    [a, ab, ca],
    [ab, b, bc],
    [ca, bc, c],
    [ab, bc, ca],
  ];
}

interface Segment {
  e0: string;
  e1: string;
}

export function contourLoops(
  snap: VtkSnapshot,
  field: string,
  level: number,
): Loop[] {
  const f = snap.scalars.get(field);
  if (!f) throw new Error(`no scalar field '${field}' in snapshot`);
  return marchingLoops(snap, f, level);
}

function edgeKey(i: number, j: number): string {
  return i < j ? `${i},${j}` : `${j},${i}`;
}

function marchingLoops(snap: VtkSnapshot, f: Float64Array, level: number): Loop[] {
  // nodes with f >= level count as "outside"; ties are then consistent
  // across neighboring triangles and no degenerate segments appear
  const inside = (n: number) => f[n] < level;
  const cut = new Map<string, [number, number]>(); // edge key -> crossing xy
  const segments: Segment[] = [];
  const segsAtEdge = new Map<string, number[]>();

  const crossing = (i: number, j: number): string => {
    const key = edgeKey(i, j);
    if (!cut.has(key)) {
      const t = (level - f[i]) / (f[j] - f[i]);
      const x = snap.points[3 * i] + t * (snap.points[3 * j] - snap.points[3 * i]);
      const y = snap.points[3 * i + 1] + t * (snap.points[3 * j + 1] - snap.points[3 * i + 1]);
      cut.set(key, [x, y]);
    }
    return key;
  };

  for (const cell of snap.cells) {
    for (const [a, b, c] of subTriangles(cell)) {
      const ia = inside(a), ib = inside(b), ic = inside(c);
      if (ia === ib && ib === ic) continue;
      const keys: string[] = [];
      if (ia !== ib) keys.push(crossing(a, b));
      if (ib !== ic) keys.push(crossing(b, c));
      if (ic !== ia) keys.push(crossing(c, a));
      // a mixed linear triangle is cut on exactly two edges
      const id = segments.length;
      segments.push({ e0: keys[0], e1: keys[1] });
      for (const k of keys) {
        const lst = segsAtEdge.get(k);
        if (lst) lst.push(id);
        else segsAtEdge.set(k, [id]);
      }
    }
  }

  const used = new Array<boolean>(segments.length).fill(false);
  const loops: Loop[] = [];

  const walk = (startSeg: number, startEdge: string): Loop => {
    const pts: Array<[number, number]> = [cut.get(startEdge)!];
    let seg = startSeg;
    let enter = startEdge;
    let closed = false;
    for (;;) {
      used[seg] = true;
      const exit = segments[seg].e0 === enter ? segments[seg].e1 : segments[seg].e0;
      pts.push(cut.get(exit)!);
      if (exit === startEdge) {
        closed = true;
        break;
      }
      const nbrs = segsAtEdge.get(exit)!;
      const nxt = nbrs.find((s) => !used[s]);
      if (nxt === undefined) break;
      seg = nxt;
      enter = exit;
    }
    return { xy: pts, closed };
  };

  // open chains first, so their walks start at the true curve ends
  for (const [key, lst] of segsAtEdge) {
    if (lst.length === 1 && !used[lst[0]]) loops.push(walk(lst[0], key));
  }
  for (let s = 0; s < segments.length; s++) {
    if (!used[s]) loops.push(walk(s, segments[s].e0));
  }
  return loops;
}

/** area-weighted centroid of a closed polyline (shoelace) */
export function loopCentroid(loop: Loop): [number, number] {
  const p = loop.xy;
  let a = 0, cx = 0, cy = 0;
  for (let k = 0; k + 1 < p.length; k++) {
    const w = p[k][0] * p[k + 1][1] - p[k + 1][0] * p[k][1];
    a += w;
    cx += (p[k][0] + p[k + 1][0]) * w;
    cy += (p[k][1] + p[k + 1][1]) * w;
  }
  return [cx / (3 * a), cy / (3 * a)];
}

export function loopArea(loop: Loop): number {
  const p = loop.xy;
  let a = 0;
  for (let k = 0; k + 1 < p.length; k++) {
    a += p[k][0] * p[k + 1][1] - p[k + 1][0] * p[k][1];
  }
  return Math.abs(a) / 2;
}
