/** Minimal reader for the solver's legacy ASCII VTK snapshots.
 *
 * Supports exactly what the solver writes: UNSTRUCTURED_GRID with 6-node
 * quadratic triangles (cell type 22) and POINT_DATA scalars/vectors.
 */

export interface VtkSnapshot {
  title: string;
  /** xyz triples, length 3*npoints */
  points: Float64Array;
  npoints: number;
  /** per cell: the six node ids (corners, then midpoints of edges 01,12,20) */
  cells: Int32Array[];
  cellTypes: Int32Array;
  scalars: Map<string, Float64Array>;
  /** xyz triples per point */
  vectors: Map<string, Float64Array>;
}

export class VtkError extends Error {}

export function parseVtk(text: string, path = "<vtk>"): VtkSnapshot {
  const lines = text.split("\n");
  let i = 0;
  const next = () => {
    while (i < lines.length && lines[i].trim() === "") i++;
    if (i >= lines.length) throw new VtkError(`${path}: unexpected end of file`);
    return lines[i++];
  };
  if (!next().startsWith("# vtk DataFile")) throw new VtkError(`${path}: not a legacy VTK file`);
  const title = next();
  if (next().trim() !== "ASCII") throw new VtkError(`${path}: only ASCII supported`);
  if (next().trim() !== "DATASET UNSTRUCTURED_GRID") {
    throw new VtkError(`${path}: only UNSTRUCTURED_GRID supported`);
  }

  const pointsHead = next().split(/\s+/);
  if (pointsHead[0] !== "POINTS") throw new VtkError(`${path}: expected POINTS`);
  const npoints = parseInt(pointsHead[1], 10);
  const points = new Float64Array(3 * npoints);
  fillFloats(points, next, 3 * npoints);

  const cellsHead = next().split(/\s+/);
  if (cellsHead[0] !== "CELLS") throw new VtkError(`${path}: expected CELLS`);
  const ncells = parseInt(cellsHead[1], 10);
  const cells: Int32Array[] = [];
  for (let c = 0; c < ncells; c++) {
    const vals = next().trim().split(/\s+/).map((v) => parseInt(v, 10));
    if (vals[0] !== vals.length - 1) throw new VtkError(`${path}: malformed cell row`);
    cells.push(Int32Array.from(vals.slice(1)));
  }

  if (next().split(/\s+/)[0] !== "CELL_TYPES") throw new VtkError(`${path}: expected CELL_TYPES`);
  const cellTypes = new Int32Array(ncells);
  for (let c = 0; c < ncells; c++) cellTypes[c] = parseInt(next(), 10);

  const scalars = new Map<string, Float64Array>();
  const vectors = new Map<string, Float64Array>();
  const pdHead = next().split(/\s+/);
  if (pdHead[0] !== "POINT_DATA") throw new VtkError(`${path}: expected POINT_DATA`);
  if (parseInt(pdHead[1], 10) !== npoints) throw new VtkError(`${path}: POINT_DATA size mismatch`);

  while (i < lines.length) {
    while (i < lines.length && lines[i].trim() === "") i++;
    if (i >= lines.length) break;
    const head = next().split(/\s+/);
    if (head[0] === "SCALARS") {
      const lookup = next();
      if (!lookup.startsWith("LOOKUP_TABLE")) throw new VtkError(`${path}: expected LOOKUP_TABLE`);
      const data = new Float64Array(npoints);
      fillFloats(data, next, npoints);
      scalars.set(head[1], data);
    } else if (head[0] === "VECTORS") {
      const data = new Float64Array(3 * npoints);
      fillFloats(data, next, 3 * npoints);
      vectors.set(head[1], data);
    } else {
      throw new VtkError(`${path}: unsupported section ${head[0]}`);
    }
  }
  return { title, points, npoints, cells, cellTypes, scalars, vectors };
}

function fillFloats(out: Float64Array, next: () => string, count: number) {
  let k = 0;
  while (k < count) {
    for (const tok of next().trim().split(/\s+/)) {
      out[k++] = Number(tok);
    }
  }
  if (k !== count) throw new VtkError(`expected ${count} values, got ${k}`);
}
