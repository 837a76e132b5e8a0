import { beforeAll, describe, expect, it } from "vitest";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { SCHEMA } from "../src/csv.js";
import { loopCentroid } from "../src/contour.js";
import { plotEnergy, plotInterface, plotVolume } from "../src/plots.js";

const FIX = fileURLToPath(new URL("../fixtures", import.meta.url));
const MATCHED = join(FIX, "kissing-matched.csv");
const ONETEN = join(FIX, "kissing-1to10.csv");
const KISSING_VTK = join(FIX, "kissing-t0.vtk");
const RISING_VTK = join(FIX, "rising-t0.vtk");

let tmp: string;
beforeAll(() => {
  tmp = mkdtempSync(join(tmpdir(), "postproc-"));
});

const UNIFORM_VTK = `# vtk DataFile Version 3.0
uniform test
ASCII
DATASET UNSTRUCTURED_GRID
POINTS 6 double
0 0 0
1 0 0
0 1 0
0.5 0 0
0.5 0.5 0
0 0.5 0
CELLS 1 7
6 0 1 2 3 4 5
CELL_TYPES 1
22
POINT_DATA 6
SCALARS c double
LOOKUP_TABLE default
1 1 1 1 1 1
SCALARS div_u double
LOOKUP_TABLE default
0 0 0 0 0 0
VECTORS u double
0 0 0
0 0 0
0 0 0
0 0 0
0 0 0
0 0 0
`;

describe("plotEnergy", () => {
  it("overlays runs and reports their starting energies", () => {
    const out = join(tmp, "energy.svg");
    const r = plotEnergy([MATCHED, ONETEN], out);
    expect(existsSync(out)).toBe(true);
    expect(readFileSync(out, "utf8").startsWith("<svg")).toBe(true);
    expect(r.labels).toEqual(["kissing 1:1", "kissing 1:10"]);
    // the density contrast contributes extra potential at the interface
    expect(r.initialEnergies[1]).toBeGreaterThan(r.initialEnergies[0]);
    expect(r.plot.pixels.length).toBe(2);
  });

  it("renders a decaying series as pixels moving down-right", () => {
    const r = plotEnergy([MATCHED], join(tmp, "energy1.svg"));
    const pix = r.plot.pixels[0];
    for (let k = 1; k < pix.length; k++) {
      expect(pix[k][0]).toBeGreaterThan(pix[k - 1][0]);
      // SVG y grows downward, so decreasing energy moves down the canvas
      expect(pix[k][1]).toBeGreaterThan(pix[k - 1][1]);
    }
  });

  it("adds the four component series on request", () => {
    const r = plotEnergy([MATCHED], join(tmp, "energy-comp.svg"), { components: true });
    expect(r.plot.pixels.length).toBe(5);
  });

  it("rejects a header-only CSV", () => {
    const p = join(tmp, "empty.csv");
    writeFileSync(p, SCHEMA.join(",") + "\n");
    expect(() => plotEnergy([p], join(tmp, "x.svg"))).toThrow(/no data rows/);
  });
});

describe("plotVolume", () => {
  it("pads the y-range so a conserved volume is not a zoomed-in wiggle", () => {
    const out = join(tmp, "volume.svg");
    const r = plotVolume([MATCHED, ONETEN], out);
    expect(existsSync(out)).toBe(true);
    expect(r.labels.length).toBe(2);
    const [lo, hi] = r.plot.ylim;
    expect(lo).toBeLessThan(3.49);
    expect(hi).toBeGreaterThan(3.4935);
    expect(hi - lo).toBeGreaterThan(0.03); // at least 1% of the mean
  });

  it("refuses series with NaN entries", () => {
    const lines = readFileSync(MATCHED, "utf8").trimEnd().split("\n");
    const first = lines.findIndex((l) => !l.startsWith("#")) + 1;
    const row = lines[first].split(",");
    row[SCHEMA.indexOf("volume")] = "nan";
    lines[first] = row.join(",");
    const p = join(tmp, "nan.csv");
    writeFileSync(p, lines.join("\n") + "\n");
    expect(() => plotVolume([p], join(tmp, "y.svg"))).toThrow(/NaN rows/);
  });
});

describe("plotInterface", () => {
  it("draws the background, one coalesced contour, and no glyphs at rest", () => {
    const out = join(tmp, "iface.svg");
    const r = plotInterface(KISSING_VTK, out);
    expect(r.loops.length).toBe(1);
    expect(r.closedLoops).toBe(1);
    expect(r.warning).toBeUndefined();
    const svg = readFileSync(out, "utf8");
    expect(svg).toContain("<polygon"); // filled background triangles
    expect(svg).toContain("<polyline"); // the c=0.5 curve
    expect(svg).not.toContain("<circle"); // u=0: no velocity glyphs
    expect(svg).toContain("background: div_u");
  });

  it("finds one closed contour around the resting bubble", () => {
    const out = join(tmp, "iface-rising.svg");
    const r = plotInterface(RISING_VTK, out);
    expect(r.closedLoops).toBe(1);
    const [cx, cy] = loopCentroid(r.loops[0]);
    expect(cx).toBeCloseTo(0, 2);
    expect(cy).toBeCloseTo(-0.6, 2);
  });

  it("supports a speed background", () => {
    const out = join(tmp, "iface-speed.svg");
    const r = plotInterface(KISSING_VTK, out, { background: "speed" });
    expect(r.closedLoops).toBe(1);
    expect(readFileSync(out, "utf8")).toContain("background: speed");
  });

  it("fails cleanly when the requested background field is absent", () => {
    const text = readFileSync(KISSING_VTK, "utf8");
    const stripped = text.replace(/SCALARS div_u[\s\S]*?(?=VECTORS)/, "");
    const p = join(tmp, "no-div.vtk");
    writeFileSync(p, stripped);
    expect(() => plotInterface(p, join(tmp, "z.svg"))).toThrow(/missing scalar field div_u/);
    // the same file still plots when the background does not need div_u
    expect(plotInterface(p, join(tmp, "z2.svg"), { background: "speed" }).closedLoops).toBe(1);
  });

  it("warns instead of failing on a uniform phase field", () => {
    const p = join(tmp, "uniform.vtk");
    writeFileSync(p, UNIFORM_VTK);
    const out = join(tmp, "uniform.svg");
    const r = plotInterface(p, out);
    expect(r.loops.length).toBe(0);
    expect(r.closedLoops).toBe(0);
    expect(r.warning).toMatch(/no c=0.5 contour/);
    expect(existsSync(out)).toBe(true);
  });
});
