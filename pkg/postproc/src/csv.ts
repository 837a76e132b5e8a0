/** Reader for the solver's timeseries CSV.
 *
 * The schema is fixed; anything else is a hard error so plots never guess
 * at columns. Leading '#' lines are the run's provenance block and are kept
 * verbatim.
 */

export const SCHEMA = [
  "t", "E_total", "E_kin", "E_mix", "E_grad", "E_pot",
  "D_visc", "D_div", "D_chem", "law_residual",
  "volume", "mass", "newton_iters", "remeshed",
] as const;

export type ColumnName = (typeof SCHEMA)[number];

export interface Timeseries {
  provenance: string[];
  rows: number[][];
  column(name: ColumnName): number[];
  /** preset/density label recovered from the provenance block */
  label: string;
}

export class SchemaError extends Error {}

export function labelFrom(provenance: string[]): string {
  let preset = "run";
  let pair = "";
  for (const line of provenance) {
    const m = line.match(/preset = (\S+)/);
    if (m) preset = m[1];
    const d = line.match(/rho1=(\S+) rho2=(\S+)/);
    if (d) pair = ` ${trimNum(d[1])}:${trimNum(d[2])}`;
  }
  return preset + pair;
}

function trimNum(s: string): string {
  const v = Number(s);
  return Number.isFinite(v) ? String(v) : s;
}

export function parseTimeseries(text: string, path = "<csv>"): Timeseries {
  const provenance: string[] = [];
  let header: string | null = null;
  const rows: number[][] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trimEnd();
    if (line.startsWith("#")) {
      provenance.push(line);
    } else if (header === null) {
      if (line === "") continue;
      header = line;
    } else if (line !== "") {
      const vals = line.split(",").map(Number);
      if (vals.length !== SCHEMA.length) {
        throw new SchemaError(`${path}: row has ${vals.length} fields, expected ${SCHEMA.length}`);
      }
      rows.push(vals);
    }
  }
  if (header === null) throw new SchemaError(`${path}: no header line`);
  if (header !== SCHEMA.join(",")) {
    throw new SchemaError(`${path}: header does not match the timeseries schema: ${header}`);
  }
  return {
    provenance,
    rows,
    label: labelFrom(provenance),
    column(name: ColumnName): number[] {
      const k = SCHEMA.indexOf(name);
      if (k < 0) throw new SchemaError(`${path}: no column named '${name}'`);
      return rows.map((r) => r[k]);
    },
  };
}
