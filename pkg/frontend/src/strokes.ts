/** Stroke capture and conversion between canvas strokes and the
 * three-point wire format. */

import type { CanvasStroke, Point3, Sketch } from "./types.js";

export const PEN_DOWN = -1;
export const PEN_UP = 1;

/** Normalize canvas-pixel strokes into [0,1]^2 (preserving aspect ratio)
 * and emit three-point format with pen-up at each stroke end. */
export function strokesToSketch(strokes: CanvasStroke[]): Sketch {
  const all = strokes.flatMap((s) => s.samples);
  if (all.length === 0) {
    throw new Error("empty canvas: draw at least one stroke");
  }
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const p of all) {
    minX = Math.min(minX, p.x);
    minY = Math.min(minY, p.y);
    maxX = Math.max(maxX, p.x);
    maxY = Math.max(maxY, p.y);
  }
  const side = Math.max(maxX - minX, maxY - minY);
  const scale = side > 0 ? 1 / side : 1;
  const points: Point3[] = [];
  for (const stroke of strokes) {
    stroke.samples.forEach((p, i) => {
      const pen = i === stroke.samples.length - 1 ? PEN_UP : PEN_DOWN;
      points.push([(p.x - minX) * scale, (p.y - minY) * scale, pen]);
    });
  }
  return { points };
}

/** Wire round-trip helpers; JSON.parse(sketchToJson(s)) is lossless. */
export function sketchToJson(sketch: Sketch): string {
  return JSON.stringify(sketch);
}

export function sketchFromJson(text: string): Sketch {
  const parsed = JSON.parse(text) as Sketch;
  if (!Array.isArray(parsed.points)) {
    throw new Error("sketch JSON must contain a points array");
  }
  for (const p of parsed.points) {
    if (!Array.isArray(p) || p.length !== 3 || p.some((v) => typeof v !== "number")) {
      throw new Error("each point must be a [x, y, pen] number triple");
    }
  }
  return { points: parsed.points.map((p) => [p[0], p[1], p[2]] as Point3) };
}

/** Split into per-stroke point runs; each run ends at a pen-up point. */
export function splitStrokes(sketch: Sketch): Point3[][] {
  const strokes: Point3[][] = [];
  let current: Point3[] = [];
  for (const p of sketch.points) {
    current.push(p);
    if (p[2] === PEN_UP) {
      strokes.push(current);
      current = [];
    }
  }
  if (current.length > 0) strokes.push(current);
  return strokes;
}

/** Client-side equispaced resampling preview: `target` points placed at
 * equal arc-length spacing per stroke (budget proportional to stroke
 * length, minimum 2). Display-only; the server re-applies its own
 * canonical preprocessing. */
export function resampleEquispaced(sketch: Sketch, target: number): Sketch {
  const strokes = splitStrokes(sketch).filter((s) => s.length > 0);
  if (strokes.length === 0 || target < 2 * strokes.length) {
    throw new Error(`target ${target} too small for ${strokes.length} strokes`);
  }
  const lengths = strokes.map((s) => {
    let acc = 0;
    for (let i = 1; i < s.length; i++) {
      acc += Math.hypot(s[i]![0] - s[i - 1]![0], s[i]![1] - s[i - 1]![1]);
    }
    return acc;
  });
  const total = lengths.reduce((a, b) => a + b, 0);
  // proportional budget with a minimum of 2 per stroke
  const budgets = lengths.map((len) =>
    Math.max(2, Math.round((total > 0 ? len / total : 1 / strokes.length) * target)),
  );
  // trim/pad to hit the target exactly, never dropping below 2
  let excess = budgets.reduce((a, b) => a + b, 0) - target;
  for (let i = 0; excess !== 0 && i < budgets.length; i++) {
    const give = Math.min(Math.max(budgets[i]! - 2, 0), Math.max(excess, 0));
    if (excess > 0) {
      budgets[i]! -= give;
      excess -= give;
    } else {
      budgets[i]! += 1;
      excess += 1;
    }
  }
  const points: Point3[] = [];
  strokes.forEach((stroke, si) => {
    const n = budgets[si]!;
    const cum: number[] = [0];
    for (let i = 1; i < stroke.length; i++) {
      cum.push(
        cum[i - 1]! + Math.hypot(stroke[i]![0] - stroke[i - 1]![0], stroke[i]![1] - stroke[i - 1]![1]),
      );
    }
    const strokeLen = cum[cum.length - 1]!;
    for (let j = 0; j < n; j++) {
      const s = strokeLen * (j / (n - 1));
      let k = cum.findIndex((c) => c >= s);
      if (k <= 0) k = 1;
      const span = cum[k]! - cum[k - 1]!;
      const frac = span > 0 ? (s - cum[k - 1]!) / span : 0;
      const x = stroke[k - 1]![0] + frac * (stroke[k]![0] - stroke[k - 1]![0]);
      const y = stroke[k - 1]![1] + frac * (stroke[k]![1] - stroke[k - 1]![1]);
      points.push([x, y, j === n - 1 ? PEN_UP : PEN_DOWN]);
    }
  });
  return { points };
}

/** Coordinate pairs only (vectorize-panel input). */
export function sketchToPointPairs(sketch: Sketch): [number, number][] {
  return sketch.points.map((p) => [p[0], p[1]]);
}
