import { describe, expect, it } from "vitest";

import { playbackFrames, sketchToSvg, topologyColor } from "../src/render.js";
import { PEN_DOWN, PEN_UP } from "../src/strokes.js";
import type { Sketch } from "../src/types.js";

describe("topologyColor", () => {
  it("runs black to yellow over the draw order", () => {
    expect(topologyColor(0)).toBe("#000000");
    expect(topologyColor(1)).toBe("#ffff00");
  });

  it("keeps red and green channels equal (no hue drift)", () => {
    for (const f of [0.1, 0.33, 0.5, 0.77]) {
      const c = topologyColor(f);
      expect(c.slice(1, 3)).toBe(c.slice(3, 5));
      expect(c.slice(5)).toBe("00");
    }
  });

  it("clamps out-of-range fractions", () => {
    expect(topologyColor(-1)).toBe("#000000");
    expect(topologyColor(2)).toBe("#ffff00");
  });
});

const square: Sketch = {
  points: [
    [0, 0, PEN_DOWN],
    [1, 0, PEN_DOWN],
    [1, 1, PEN_DOWN],
    [0, 1, PEN_UP],
  ],
};

describe("sketchToSvg", () => {
  it("draws one segment per consecutive pen-down pair", () => {
    const svg = sketchToSvg(square);
    expect(svg.match(/<line /g)).toHaveLength(3);
  });

  it("skips segments that follow a pen-up point", () => {
    const twoStrokes: Sketch = {
      points: [
        [0, 0, PEN_DOWN],
        [1, 0, PEN_UP],
        [0, 1, PEN_DOWN],
        [1, 1, PEN_UP],
      ],
    };
    const svg = sketchToSvg(twoStrokes);
    expect(svg.match(/<line /g)).toHaveLength(2);
  });

  it("colors early segments darker than late ones", () => {
    const svg = sketchToSvg(square);
    const colors = [...svg.matchAll(/stroke="(#[0-9a-f]{6})"/g)].map((m) => m[1]);
    expect(colors[0]).toBe("#000000");
    const last = parseInt(colors[colors.length - 1]!.slice(1, 3), 16);
    const first = parseInt(colors[0]!.slice(1, 3), 16);
    expect(last).toBeGreaterThan(first);
  });

  it("limits segments in playback mode", () => {
    const svg = sketchToSvg(square, { visible: 2 });
    expect(svg.match(/<line /g)).toHaveLength(1);
  });
});

describe("playbackFrames", () => {
  it("emits one frame per point, ending on the full render", () => {
    const frames = playbackFrames(square);
    expect(frames).toHaveLength(4);
    expect(frames[frames.length - 1]).toBe(sketchToSvg(square, { visible: 4 }));
  });
});
