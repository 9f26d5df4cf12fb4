/**
 * Browser wiring: file picker upload, job progress, and a canvas compositor
 * that paints the viewer's depth-sorted quads with Gaussian falloff.
 * The API base URL comes from `?api=` or defaults to the page origin.
 */

import { ApiClient } from "./api.js";
import { CaptureApp, type AppSnapshot } from "./app.js";
import { updateFps } from "./viewer.js";

function apiBaseUrl(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return override ?? window.location.origin;
}

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing #${id}`);
  return found as T;
}

function paint(ctx: CanvasRenderingContext2D, app: CaptureApp): void {
  const canvas = ctx.canvas;
  ctx.fillStyle = "#000";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const viewer = app.viewer;
  if (!viewer) return;
  const quads = viewer.drawList({
    width: canvas.width,
    height: canvas.height,
    fovY: Math.PI / 3,
  });
  for (const quad of quads) {
    const extent = Math.max(1, 3 * quad.radiusPx);
    const [r, g, b] = quad.color;
    const gradient = ctx.createRadialGradient(quad.x, quad.y, 0, quad.x, quad.y, extent);
    const rgb = `${Math.round(r * 255)},${Math.round(g * 255)},${Math.round(b * 255)}`;
    gradient.addColorStop(0, `rgba(${rgb},${quad.opacity.toFixed(3)})`);
    gradient.addColorStop(0.5, `rgba(${rgb},${(quad.opacity * Math.exp(-1.125)).toFixed(3)})`);
    gradient.addColorStop(1, `rgba(${rgb},0)`);
    ctx.fillStyle = gradient;
    ctx.fillRect(quad.x - extent, quad.y - extent, 2 * extent, 2 * extent);
  }
}

function describe(snapshot: AppSnapshot): string {
  switch (snapshot.phase) {
    case "idle":
      return "pick a capture to begin";
    case "uploading":
      return "uploading capture";
    case "processing":
      return `${snapshot.jobState ?? "processing"} ${(snapshot.progress * 100).toFixed(0)}%`;
    case "ready":
      return `ready: ${snapshot.splatCount} splats`;
    case "failed":
      return `failed: ${snapshot.error ?? "unknown error"}`;
  }
}

function start(): void {
  const input = element<HTMLInputElement>("capture-input");
  const status = element<HTMLElement>("status");
  const progressBar = element<HTMLProgressElement>("progress");
  const fpsLabel = element<HTMLElement>("fps");
  const scaleSlider = element<HTMLInputElement>("scale");
  const canvas = element<HTMLCanvasElement>("viewport");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");

  const client = new ApiClient({ baseUrl: apiBaseUrl() });
  const app = new CaptureApp(client, (snapshot) => {
    status.textContent = describe(snapshot);
    progressBar.value = snapshot.progress;
    progressBar.hidden = snapshot.phase === "idle" || snapshot.phase === "ready";
  });

  input.addEventListener("change", () => {
    const file = input.files?.[0];
    if (file) void app.submitCapture(file, file.name);
  });

  scaleSlider.addEventListener("input", () => {
    app.viewer?.setModelScale(Number(scaleSlider.value));
  });

  let dragging: "rotate" | "pan" | null = null;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (event) => {
    dragging = event.button === 2 || event.shiftKey ? "pan" : "rotate";
    lastX = event.clientX;
    lastY = event.clientY;
    canvas.setPointerCapture(event.pointerId);
  });
  canvas.addEventListener("pointermove", (event) => {
    if (!dragging || !app.viewer) return;
    const dx = event.clientX - lastX;
    const dy = event.clientY - lastY;
    lastX = event.clientX;
    lastY = event.clientY;
    if (dragging === "rotate") app.viewer.rotate(dx, dy);
    else app.viewer.pan(dx, dy);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = null;
  });
  canvas.addEventListener("contextmenu", (event) => event.preventDefault());
  canvas.addEventListener(
    "wheel",
    (event) => {
      event.preventDefault();
      app.viewer?.zoom(event.deltaY);
    },
    { passive: false }
  );

  let lastFrame = performance.now();
  const frame = (now: number) => {
    if (app.viewer) {
      paint(ctx, app);
      fpsLabel.textContent = `${updateFps(app.viewer.state, now - lastFrame).toFixed(0)} fps`;
    }
    lastFrame = now;
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

document.addEventListener("DOMContentLoaded", start);
