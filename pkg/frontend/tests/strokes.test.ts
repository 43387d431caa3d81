import { describe, expect, it } from "vitest";

import {
  PEN_DOWN,
  PEN_UP,
  resampleEquispaced,
  sketchFromJson,
  sketchToJson,
  sketchToPointPairs,
  splitStrokes,
  strokesToSketch,
} from "../src/strokes.js";
import type { CanvasStroke, Sketch } from "../src/types.js";

const stroke = (pts: [number, number][]): CanvasStroke => ({
  samples: pts.map(([x, y], i) => ({ x, y, t: i })),
});

describe("strokesToSketch", () => {
  it("normalizes coordinates into [0,1]^2", () => {
    const sk = strokesToSketch([stroke([[100, 50], [300, 50], [300, 250]])]);
    for (const [x, y] of sk.points) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(1);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(1);
    }
    const xs = sk.points.map((p) => p[0]);
    const ys = sk.points.map((p) => p[1]);
    const side = Math.max(Math.max(...xs) - Math.min(...xs), Math.max(...ys) - Math.min(...ys));
    expect(side).toBeCloseTo(1, 9);
  });

  it("preserves aspect ratio", () => {
    const sk = strokesToSketch([stroke([[0, 0], [200, 100]])]);
    const last = sk.points[sk.points.length - 1]!;
    expect(last[0]).toBeCloseTo(1, 9);
    expect(last[1]).toBeCloseTo(0.5, 9);
  });

  it("marks pen-up exactly at stroke ends", () => {
    const sk = strokesToSketch([stroke([[0, 0], [1, 0]]), stroke([[2, 0], [3, 0], [4, 0]])]);
    expect(sk.points.map((p) => p[2])).toEqual([PEN_DOWN, PEN_UP, PEN_DOWN, PEN_DOWN, PEN_UP]);
  });

  it("rejects an empty canvas", () => {
    expect(() => strokesToSketch([])).toThrow(/empty canvas/);
  });
});

describe("JSON round trip", () => {
  it("is lossless for captured samples", () => {
    const sk = strokesToSketch([stroke([[0, 0], [37.25, 11.125], [99.5, 3.0625]])]);
    const back = sketchFromJson(sketchToJson(sk));
    expect(back).toEqual(sk);
  });

  it("rejects malformed payloads", () => {
    expect(() => sketchFromJson('{"points": [[1, 2]]}')).toThrow(/triple/);
    expect(() => sketchFromJson('{"nope": 1}')).toThrow(/points array/);
  });
});

describe("splitStrokes", () => {
  it("splits on pen-up boundaries", () => {
    const sk: Sketch = {
      points: [
        [0, 0, PEN_DOWN],
        [1, 0, PEN_UP],
        [2, 0, PEN_DOWN],
        [3, 0, PEN_UP],
      ],
    };
    expect(splitStrokes(sk).map((s) => s.length)).toEqual([2, 2]);
  });
});

describe("resampleEquispaced", () => {
  it("emits exactly the requested number of points", () => {
    const sk = strokesToSketch([stroke([[0, 0], [10, 0], [10, 10], [0, 10]])]);
    expect(resampleEquispaced(sk, 17).points).toHaveLength(17);
  });

  it("places points at equal arc-length spacing on a straight line", () => {
    const sk: Sketch = {
      points: [
        [0, 0, PEN_DOWN],
        [0.3, 0, PEN_DOWN],
        [1, 0, PEN_UP],
      ],
    };
    const out = resampleEquispaced(sk, 5);
    const xs = out.points.map((p) => p[0]);
    expect(xs).toEqual([0, 0.25, 0.5, 0.75, 1]);
  });

  it("keeps stroke boundaries: one pen-up per stroke", () => {
    const sk = strokesToSketch([stroke([[0, 0], [10, 0]]), stroke([[0, 5], [10, 5]])]);
    const out = resampleEquispaced(sk, 10);
    expect(out.points.filter((p) => p[2] === PEN_UP)).toHaveLength(2);
  });

  it("rejects budgets below two points per stroke", () => {
    const sk = strokesToSketch([stroke([[0, 0], [10, 0]]), stroke([[0, 5], [10, 5]])]);
    expect(() => resampleEquispaced(sk, 3)).toThrow(/too small/);
  });
});

describe("sketchToPointPairs", () => {
  it("drops the pen channel", () => {
    const sk: Sketch = { points: [[0.1, 0.2, PEN_DOWN], [0.3, 0.4, PEN_UP]] };
    expect(sketchToPointPairs(sk)).toEqual([
      [0.1, 0.2],
      [0.3, 0.4],
    ]);
  });
});
