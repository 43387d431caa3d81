/** Browser entry point: canvas stroke capture plus one panel per studio
 * operation, all talking to the HTTP service. This file is DOM plumbing
 * only; the logic lives in strokes/api/render/panel and is unit-tested. */

import { StudioApi } from "./api.js";
import { PanelRunner, SeedBox } from "./panel.js";
import { playbackFrames, sketchToSvg } from "./render.js";
import { resampleEquispaced, sketchToPointPairs, strokesToSketch } from "./strokes.js";
import type { CanvasStroke, Sketch } from "./types.js";

const BASE_URL = (window as unknown as { SKETCHDIFF_URL?: string }).SKETCHDIFF_URL ?? "";
const api = new StudioApi(BASE_URL);

let strokes: CanvasStroke[] = [];
let currentInput: Sketch | null = null;
let referenceSlot: Sketch | null = null;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function setError(panel: string, message: string | null): void {
  const box = $(`${panel}-error`);
  box.textContent = message ?? "";
  box.classList.toggle("visible", message !== null);
}

function showResult(panel: string, sketch: Sketch, seed?: number): void {
  const target = $(`${panel}-result`);
  target.innerHTML = sketchToSvg(sketch);
  if (seed !== undefined) {
    $(`${panel}-seed`).textContent = String(seed);
  }
  const useBtn = $(`${panel}-use`);
  useBtn.onclick = () => {
    currentInput = sketch;
    strokes = [];
    renderInput();
  };
  const playBtn = $(`${panel}-play`);
  playBtn.onclick = () => animate(target, sketch);
}

function animate(target: HTMLElement, sketch: Sketch): void {
  const frames = playbackFrames(sketch);
  let i = 0;
  const tick = () => {
    target.innerHTML = frames[i] ?? "";
    i += 1;
    if (i < frames.length) requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
}

function inputSketch(): Sketch {
  if (currentInput) return currentInput;
  return strokesToSketch(strokes); // throws on empty canvas
}

function renderInput(): void {
  const preview = $("input-preview");
  try {
    const sk = inputSketch();
    preview.innerHTML = sketchToSvg(sk);
    setError("input", null);
  } catch {
    preview.innerHTML = "";
  }
}

// --- canvas capture -------------------------------------------------------

function wireCanvas(): void {
  const canvas = $("draw-canvas") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  let active: CanvasStroke | null = null;
  const pos = (ev: PointerEvent) => {
    const r = canvas.getBoundingClientRect();
    return { x: ev.clientX - r.left, y: ev.clientY - r.top, t: ev.timeStamp };
  };
  canvas.addEventListener("pointerdown", (ev) => {
    active = { samples: [pos(ev)] };
    currentInput = null;
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!active) return;
    const p = pos(ev);
    active.samples.push(p);
    const prev = active.samples[active.samples.length - 2]!;
    ctx.strokeStyle = "#222";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(prev.x, prev.y);
    ctx.lineTo(p.x, p.y);
    ctx.stroke();
  });
  const finish = () => {
    if (active && active.samples.length > 1) strokes.push(active);
    active = null;
    renderInput();
  };
  canvas.addEventListener("pointerup", finish);
  canvas.addEventListener("pointerleave", finish);
  $("clear-canvas").onclick = () => {
    strokes = [];
    currentInput = null;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    renderInput();
  };
  $("resample-preview").onclick = () => {
    try {
      const target = Number(($("resample-n") as HTMLInputElement).value);
      currentInput = resampleEquispaced(inputSketch(), target);
      renderInput();
      setError("input", null);
    } catch (err) {
      setError("input", err instanceof Error ? err.message : String(err));
    }
  };
  $("set-reference").onclick = () => {
    try {
      referenceSlot = inputSketch();
      $("reference-preview").innerHTML = sketchToSvg(referenceSlot);
      setError("input", null);
    } catch (err) {
      setError("input", err instanceof Error ? err.message : String(err));
    }
  };
}

// --- panels ---------------------------------------------------------------

function modelId(kind: "uncond" | "seq" | "set"): string {
  return ($(`model-${kind}`) as HTMLInputElement).value;
}

function slider(id: string): number {
  return Number(($(id) as HTMLInputElement).value);
}

function wirePanels(): void {
  type PanelOutput = { sketch: Sketch; seed?: number } | null;
  const panel = () => ({ runner: new PanelRunner<PanelOutput>(), seeds: new SeedBox() });
  const panels = {
    heal: panel(),
    implicit: panel(),
    mix: panel(),
    vectorize: panel(),
    abstract: panel(),
  };

  const run = async (name: keyof typeof panels, task: () => Promise<PanelOutput>) => {
    setError(name, null);
    const { runner } = panels[name];
    const result = await runner.submit(task);
    if (result.stale) return;
    if (result.error !== null) {
      setError(name, result.error);
      return;
    }
    if (result.value) showResult(name, result.value.sketch, result.value.seed);
  };

  $("heal-go").onclick = () =>
    run("heal", async () => {
      const res = await api.heal(
        modelId("uncond"),
        inputSketch(),
        slider("heal-th"),
        panels.heal.seeds.current,
      );
      if (res.seed !== undefined) panels.heal.seeds.record(res.seed);
      return { sketch: res.sketch, seed: res.seed };
    });
  $("heal-reroll").onclick = () => panels.heal.seeds.reroll();

  $("implicit-go").onclick = () =>
    run("implicit", async () => {
      const res = await api.implicit(
        modelId("uncond"),
        inputSketch(),
        slider("implicit-tc"),
        slider("implicit-n"),
        panels.implicit.seeds.current,
      );
      panels.implicit.seeds.record(res.seed);
      const gallery = $("implicit-gallery");
      gallery.innerHTML = res.sketches.map((s) => sketchToSvg(s, { size: 120 })).join("");
      return { sketch: res.sketches[0]!, seed: res.seed };
    });
  $("implicit-reroll").onclick = () => panels.implicit.seeds.reroll();

  $("mix-go").onclick = () =>
    run("mix", async () => {
      if (!referenceSlot) throw new Error("set a reference sketch first");
      const mode = ($("mix-mode") as HTMLInputElement).checked ? "ilvr" : "latent-ddim";
      const res = await api.mix(modelId("seq"), inputSketch(), referenceSlot, {
        mode,
        delta: slider("mix-delta"),
        omega: slider("mix-omega"),
        seed: panels.mix.seeds.current,
      });
      if (res.seed !== undefined) panels.mix.seeds.record(res.seed);
      return { sketch: res.sketch, seed: res.seed };
    });
  $("mix-reroll").onclick = () => panels.mix.seeds.reroll();

  $("vectorize-go").onclick = () =>
    run("vectorize", async () => {
      const res = await api.vectorize(
        modelId("set"),
        sketchToPointPairs(inputSketch()),
        slider("vectorize-n"),
        panels.vectorize.seeds.current,
      );
      panels.vectorize.seeds.record(res.seed);
      const gallery = $("vectorize-gallery");
      gallery.innerHTML = res.sketches.map((s) => sketchToSvg(s, { size: 120 })).join("");
      return { sketch: res.sketches[0]!, seed: res.seed };
    });
  $("vectorize-reroll").onclick = () => panels.vectorize.seeds.reroll();

  $("abstract-go").onclick = () =>
    run("abstract", async () => {
      const res = await api.abstract(modelId("uncond"), slider("abstract-k"), {
        seed: panels.abstract.seeds.current,
      });
      panels.abstract.seeds.record(res.seed);
      return { sketch: res.sketch, seed: res.seed };
    });
  $("abstract-reroll").onclick = () => panels.abstract.seeds.reroll();
}

wireCanvas();
wirePanels();
renderInput();
