import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { VtkError, parseVtk } from "../src/vtk.js";

const FIX = fileURLToPath(new URL("../fixtures", import.meta.url));
const kissingText = readFileSync(join(FIX, "kissing-t0.vtk"), "utf8");

describe("parseVtk", () => {
  const snap = parseVtk(kissingText, "kissing-t0.vtk");

  it("recovers the quadratic triangulation of a 32x32 grid", () => {
    expect(snap.npoints).toBe(65 * 65); // vertices and edge midpoints
    expect(snap.points.length).toBe(3 * snap.npoints);
    expect(snap.cells.length).toBe(2 * 32 * 32);
    for (const t of snap.cellTypes) expect(t).toBe(22);
    for (const cell of snap.cells) expect(cell.length).toBe(6);
  });

  it("stores midpoints after the corners in every cell", () => {
    const P = snap.points;
    for (const cell of snap.cells.slice(0, 64)) {
      const pairs: Array<[number, number, number]> = [
        [cell[0], cell[1], cell[3]],
        [cell[1], cell[2], cell[4]],
        [cell[2], cell[0], cell[5]],
      ];
      for (const [a, b, m] of pairs) {
        expect(P[3 * m]).toBeCloseTo(0.5 * (P[3 * a] + P[3 * b]), 12);
        expect(P[3 * m + 1]).toBeCloseTo(0.5 * (P[3 * a + 1] + P[3 * b + 1]), 12);
      }
    }
  });

  it("exposes the solver's point fields", () => {
    expect([...snap.scalars.keys()].sort()).toEqual(["c", "div_u", "mu", "p_hat"]);
    expect([...snap.vectors.keys()]).toEqual(["u"]);
    const c = snap.scalars.get("c")!;
    expect(c.length).toBe(snap.npoints);
    // pure phase 2 far from the drops, phase boundary in between
    expect(Math.max(...c)).toBeGreaterThan(0.99);
    expect(Math.min(...c)).toBeLessThan(0.01);
    const u = snap.vectors.get("u")!;
    expect(u.length).toBe(3 * snap.npoints);
    for (const v of u) expect(v).toBe(0); // initial state is at rest
  });

  it("keeps z coordinates and z velocity zero in 2D", () => {
    for (let k = 0; k < snap.npoints; k++) {
      expect(snap.points[3 * k + 2]).toBe(0);
      expect(snap.vectors.get("u")![3 * k + 2]).toBe(0);
    }
  });

  it("rejects non-VTK input", () => {
    expect(() => parseVtk("hello\nworld\n", "x.vtk")).toThrow(VtkError);
  });

  it("rejects truncated files", () => {
    const cut = kissingText.slice(0, Math.floor(kissingText.length / 2));
    expect(() => parseVtk(cut, "cut.vtk")).toThrow(VtkError);
  });

  it("rejects malformed cell rows", () => {
    const bad = kissingText.replace(/^6 /m, "5 ");
    expect(() => parseVtk(bad, "bad.vtk")).toThrow(/malformed cell row/);
  });
});
