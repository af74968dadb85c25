import { describe, expect, it } from "vitest";

import { graspCorners, shoelaceArea } from "../src/overlay.js";

describe("grasp rectangle corners", () => {
  it("axis-aligned rectangle matches the evaluator convention", () => {
    const corners = graspCorners({ x: 10, y: 10, theta: 0, width: 8, conf: 1 });
    const rounded = corners.map(([x, y]) => [Math.round(x * 1e9) / 1e9, Math.round(y * 1e9) / 1e9]);
    expect(rounded).toContainEqual([6, 8]);
    expect(rounded).toContainEqual([14, 8]);
    expect(rounded).toContainEqual([14, 12]);
    expect(rounded).toContainEqual([6, 12]);
  });

  it("area is width * width/2 at any angle", () => {
    for (const theta of [0, 0.3, Math.PI / 4, -1.2]) {
      const area = shoelaceArea(graspCorners({ x: 5, y: 7, theta, width: 8, conf: 1 }));
      expect(area).toBeCloseTo(32, 9);
    }
  });

  it("rotating by pi/2 swaps the extents", () => {
    const corners = graspCorners({ x: 0, y: 0, theta: Math.PI / 2, width: 2, conf: 1 });
    const xs = corners.map(([x]) => Math.abs(x));
    const ys = corners.map(([, y]) => Math.abs(y));
    expect(Math.max(...xs)).toBeCloseTo(0.5, 6);
    expect(Math.max(...ys)).toBeCloseTo(1.0, 6);
  });
});
