/** SVG rendering with the draw-order (topology) color ramp and animated
 * playback frames. */

import { PEN_UP } from "./strokes.js";
import type { Sketch } from "./types.js";

/** Black -> yellow ramp over the draw order: early points dark, late
 * points bright. */
export function topologyColor(frac: number): string {
  const t = Math.min(1, Math.max(0, frac));
  const c = Math.round(255 * t)
    .toString(16)
    .padStart(2, "0");
  return `#${c}${c}00`;
}

export interface RenderOptions {
  size?: number;
  margin?: number;
  strokeWidth?: number;
  /** Render only the first `visible` points (for playback). */
  visible?: number;
}

/** Per-segment SVG lines, colored by each segment's start index; segments
 * that follow a pen-up point are skipped. */
export function sketchToSvg(sketch: Sketch, opts: RenderOptions = {}): string {
  const size = opts.size ?? 240;
  const margin = opts.margin ?? 12;
  const width = opts.strokeWidth ?? 2;
  const pts = sketch.points;
  const shown = opts.visible === undefined ? pts.length : Math.min(opts.visible, pts.length);
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const p of pts) {
    minX = Math.min(minX, p[0]);
    minY = Math.min(minY, p[1]);
    maxX = Math.max(maxX, p[0]);
    maxY = Math.max(maxY, p[1]);
  }
  const span = Math.max(maxX - minX, maxY - minY, 1e-9);
  const scale = (size - 2 * margin) / span;
  const sx = (x: number) => margin + (x - minX) * scale;
  const sy = (y: number) => margin + (y - minY) * scale;
  const lines: string[] = [];
  const denom = Math.max(pts.length - 1, 1);
  for (let i = 0; i + 1 < shown; i++) {
    const a = pts[i]!;
    const b = pts[i + 1]!;
    if (a[2] === PEN_UP) continue; // pen lifted: no segment to the next point
    const color = topologyColor(i / denom);
    lines.push(
      `<line x1="${sx(a[0]).toFixed(2)}" y1="${sy(a[1]).toFixed(2)}" ` +
        `x2="${sx(b[0]).toFixed(2)}" y2="${sy(b[1]).toFixed(2)}" ` +
        `stroke="${color}" stroke-width="${width}" stroke-linecap="round"/>`,
    );
  }
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${size} ${size}" ` +
    `width="${size}" height="${size}">${lines.join("")}</svg>`
  );
}

/** Frame sequence for draw-order playback: frame i shows the first i+1
 * points. */
export function playbackFrames(sketch: Sketch, opts: RenderOptions = {}): string[] {
  const frames: string[] = [];
  for (let i = 1; i <= sketch.points.length; i++) {
    frames.push(sketchToSvg(sketch, { ...opts, visible: i }));
  }
  return frames;
}
