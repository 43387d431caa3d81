/** Thin typed client over the studio service HTTP JSON API. All model
 * math happens on the server; this module only marshals requests. */

import type {
  ModelInfo,
  MultiSketchResponse,
  SampleResponse,
  SingleSketchResponse,
  Sketch,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class StudioApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const payload = (await res.json()) as { detail?: unknown };
        if (payload.detail !== undefined) detail = JSON.stringify(payload.detail);
      } catch {
        // non-JSON error body; keep statusText
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  async listModels(): Promise<ModelInfo[]> {
    const res = await this.fetchImpl(`${this.baseUrl}/models`);
    if (!res.ok) throw new ApiError(res.status, res.statusText);
    const payload = (await res.json()) as { models: ModelInfo[] };
    return payload.models;
  }

  sample(
    modelId: string,
    opts: { length?: number; sampler?: string; steps?: number; seed?: number; k?: number },
  ): Promise<SampleResponse> {
    return this.post(`/models/${modelId}/sample`, opts);
  }

  heal(modelId: string, sketch: Sketch, thFrac: number, seed?: number): Promise<SingleSketchResponse> {
    return this.post(`/models/${modelId}/heal`, {
      sketch,
      th_frac: thFrac,
      ...(seed !== undefined ? { seed } : {}),
    });
  }

  implicit(
    modelId: string,
    sketch: Sketch,
    tcFrac: number,
    n: number,
    seed?: number,
  ): Promise<MultiSketchResponse> {
    return this.post(`/models/${modelId}/implicit`, {
      sketch,
      tc_frac: tcFrac,
      n,
      ...(seed !== undefined ? { seed } : {}),
    });
  }

  mix(
    modelId: string,
    base: Sketch,
    reference: Sketch,
    opts: { mode: "latent-ddim" | "ilvr"; delta?: number; omega?: number; seed?: number },
  ): Promise<SingleSketchResponse> {
    return this.post(`/models/${modelId}/mix`, { base, reference, ...opts });
  }

  vectorize(
    modelId: string,
    points: [number, number][],
    n: number,
    seed?: number,
  ): Promise<MultiSketchResponse> {
    return this.post(`/models/${modelId}/vectorize`, {
      points,
      n,
      ...(seed !== undefined ? { seed } : {}),
    });
  }

  reconstruct(modelId: string, sketch: Sketch, lengthFactor: number): Promise<SingleSketchResponse> {
    return this.post(`/models/${modelId}/reconstruct`, {
      sketch,
      length_factor: lengthFactor,
    });
  }

  /** Abstraction = unconditional sampling with reverse-variance scale k. */
  abstract(
    modelId: string,
    k: number,
    opts: { length?: number; seed?: number } = {},
  ): Promise<SampleResponse> {
    return this.sample(modelId, { sampler: "ddpm", k, ...opts });
  }
}
