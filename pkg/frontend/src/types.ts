/** Shared wire and canvas types for the sketch studio. */

/** One point of a three-point-format sketch: x, y, pen (-1 down, +1 up). */
export type Point3 = [number, number, number];

export interface Sketch {
  points: Point3[];
}

/** One freehand stroke as captured from the pointer, in canvas pixels. */
export interface CanvasStroke {
  samples: { x: number; y: number; t: number }[];
}

export interface SampleResponse {
  sketch: Sketch;
  topology: number[];
  seed: number;
}

export interface SingleSketchResponse {
  sketch: Sketch;
  seed?: number;
}

export interface MultiSketchResponse {
  sketches: Sketch[];
  seed: number;
}

export interface ModelInfo {
  id: string;
  mode?: string;
  T?: number;
  latent_dim?: number;
  status: string;
}
