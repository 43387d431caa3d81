import { describe, expect, it, vi } from "vitest";

import { ApiError, StudioApi } from "../src/api.js";
import type { Sketch } from "../src/types.js";

const sketch: Sketch = { points: [[0, 0, -1], [1, 1, 1]] };

const jsonResponse = (status: number, body: unknown) =>
  new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });

describe("StudioApi request marshaling", () => {
  it("posts heal requests with snake_case fields", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, { sketch, seed: 7 }));
    const api = new StudioApi("http://svc", fetchMock);
    const res = await api.heal("toy", sketch, 0.2, 99);
    expect(res.seed).toBe(7);
    const [url, init] = fetchMock.mock.calls[0]!;
    expect(url).toBe("http://svc/models/toy/heal");
    expect(JSON.parse((init as RequestInit).body as string)).toEqual({
      sketch,
      th_frac: 0.2,
      seed: 99,
    });
  });

  it("omits the seed field when unset so the server draws one", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, { sketches: [sketch], seed: 3 }));
    const api = new StudioApi("http://svc", fetchMock);
    await api.implicit("toy", sketch, 0.3, 2);
    const body = JSON.parse((fetchMock.mock.calls[0]![1] as RequestInit).body as string);
    expect("seed" in body).toBe(false);
    expect(body.n).toBe(2);
    expect(body.tc_frac).toBe(0.3);
  });

  it("sends vectorize coordinate pairs", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, { sketches: [sketch], seed: 1 }));
    const api = new StudioApi("http://svc", fetchMock);
    await api.vectorize("set", [[0.1, 0.2]], 3, 5);
    const body = JSON.parse((fetchMock.mock.calls[0]![1] as RequestInit).body as string);
    expect(body).toEqual({ points: [[0.1, 0.2]], n: 3, seed: 5 });
  });

  it("routes abstraction through the sampling endpoint with k", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse(200, { sketch, topology: [0, 1], seed: 11 }),
    );
    const api = new StudioApi("http://svc", fetchMock);
    await api.abstract("toy", 0.25, { seed: 8 });
    const [url, init] = fetchMock.mock.calls[0]!;
    expect(url).toBe("http://svc/models/toy/sample");
    const body = JSON.parse((init as RequestInit).body as string);
    expect(body.k).toBe(0.25);
    expect(body.sampler).toBe("ddpm");
    expect(body.seed).toBe(8);
  });

  it("surfaces service error details with the status code", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(422, { detail: "degenerate sketch" }));
    const api = new StudioApi("http://svc", fetchMock);
    await expect(api.heal("toy", sketch, 0.2)).rejects.toThrowError(ApiError);
    await expect(api.heal("toy", sketch, 0.2)).rejects.toThrow(/422.*degenerate/);
  });

  it("lists models", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse(200, { models: [{ id: "toy", status: "ready" }] }),
    );
    const api = new StudioApi("http://svc", fetchMock);
    const models = await api.listModels();
    expect(models).toEqual([{ id: "toy", status: "ready" }]);
    expect(fetchMock.mock.calls[0]![0]).toBe("http://svc/models");
  });
});
