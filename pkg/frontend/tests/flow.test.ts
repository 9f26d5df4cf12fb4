import { readFile } from "node:fs/promises";
import { fileURLToPath } from "node:url";
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, type FetchLike, POLL_INTERVAL_MS, type JobState, type JobView } from "../src/api";
import { type AppSnapshot, CaptureApp } from "../src/app";
import type { Viewport } from "../src/viewer";

const fixturesDir = fileURLToPath(new URL("./fixtures/", import.meta.url));
const VIEWPORT: Viewport = { width: 320, height: 240, fovY: Math.PI / 3 };

function view(partial: Partial<JobView> & { state: JobState }): JobView {
  return {
    id: "job-1",
    progress: { iteration: 0, total: 300 },
    created: "2026-08-14T10:00:00+00:00",
    updated: "2026-08-14T10:00:01+00:00",
    ...partial,
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function mockService(
  pollScript: Array<() => Response>,
  modelBytes: Uint8Array
): { impl: FetchLike; log: string[] } {
  const log: string[] = [];
  let polls = 0;
  const impl: FetchLike = (url, init) => {
    const method = init?.method ?? "GET";
    log.push(`${method} ${new URL(url).pathname}`);
    return Promise.resolve().then(() => {
      if (method === "POST" && url.endsWith("/jobs")) {
        return json(view({ state: "queued" }), 201);
      }
      if (url.endsWith("/jobs/job-1/model.ply")) {
        return new Response(modelBytes.slice());
      }
      if (url.endsWith("/jobs/job-1")) {
        const step = pollScript[Math.min(polls, pollScript.length - 1)]!;
        polls += 1;
        return step();
      }
      return json({ detail: "no such route" }, 404);
    });
  };
  return { impl, log };
}

async function loadFixture(): Promise<Uint8Array> {
  return new Uint8Array(await readFile(`${fixturesDir}two.ply`));
}

describe("capture to viewer flow", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("walks queued, training, ready and ends with the model on screen", async () => {
    const modelBytes = await loadFixture();
    const { impl, log } = mockService(
      [
        () => json(view({ state: "training", progress: { iteration: 150, total: 300 } })),
        () => json(view({ state: "ready", progress: { iteration: 300, total: 300 } })),
      ],
      modelBytes
    );
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    const snapshots: AppSnapshot[] = [];
    const app = new CaptureApp(client, (s) => snapshots.push(s));

    await app.submitCapture(new Blob(["not really a video"]), "capture.mp4");
    expect(snapshots.slice(0, 2).map((s) => s.phase)).toEqual(["uploading", "processing"]);
    expect(snapshots[1]!.jobState).toBe("queued");
    expect(snapshots[1]!.progress).toBe(0);
    expect(app.current().jobId).toBe("job-1");

    await vi.advanceTimersByTimeAsync(0);
    expect(app.current().jobState).toBe("training");
    expect(app.current().progress).toBeCloseTo(0.5, 9);
    expect(app.current().viewerActive).toBe(false);

    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    await vi.advanceTimersByTimeAsync(0);

    const final = app.current();
    expect(final.phase).toBe("ready");
    expect(final.jobState).toBe("ready");
    expect(final.progress).toBe(1);
    expect(final.viewerActive).toBe(true);
    expect(final.splatCount).toBe(2);
    expect(final.error).toBeNull();
    expect(log).toContain("POST /jobs");
    expect(log).toContain("GET /jobs/job-1/model.ply");

    // the viewer now displays the two-splat fixture
    const viewer = app.viewer!;
    expect(viewer).not.toBeNull();
    const quads = viewer.drawList(VIEWPORT);
    expect(quads).toHaveLength(2);
    const redish = quads.find((q) => q.color[0] > q.color[2] + 0.3);
    const blueish = quads.find((q) => q.color[2] > q.color[0] + 0.3);
    expect(redish).toBeDefined();
    expect(blueish).toBeDefined();

    // interaction handlers move the camera monotonically with input deltas
    let azimuth = viewer.state.camera.azimuth;
    for (let i = 0; i < 5; i++) {
      viewer.rotate(12, 0);
      expect(viewer.state.camera.azimuth).toBeGreaterThan(azimuth);
      azimuth = viewer.state.camera.azimuth;
    }
    let distance = viewer.state.camera.distance;
    for (let i = 0; i < 5; i++) {
      viewer.zoom(120);
      expect(viewer.state.camera.distance).toBeGreaterThan(distance);
      distance = viewer.state.camera.distance;
    }
    for (let i = 0; i < 5; i++) {
      viewer.zoom(-240);
      expect(viewer.state.camera.distance).toBeLessThan(distance);
      distance = viewer.state.camera.distance;
    }
    const targetBefore = [...viewer.state.camera.target];
    viewer.pan(30, -12);
    expect(viewer.state.camera.target).not.toEqual(targetBefore);
    viewer.setModelScale(1.8);
    expect(viewer.state.modelScale).toBe(1.8);

    // polling stopped at the terminal state
    const pollsSoFar = log.filter((line) => line === "GET /jobs/job-1").length;
    await vi.advanceTimersByTimeAsync(10 * POLL_INTERVAL_MS);
    expect(log.filter((line) => line === "GET /jobs/job-1")).toHaveLength(pollsSoFar);
    app.dispose();
  });

  it("loads the model immediately when the upload response is already ready", async () => {
    const modelBytes = await loadFixture();
    const impl: FetchLike = (url, init) => {
      const method = init?.method ?? "GET";
      return Promise.resolve().then(() => {
        if (method === "POST") return json(view({ state: "ready" }), 201);
        if (url.endsWith("/model.ply")) return new Response(modelBytes.slice());
        return json({ detail: "no such route" }, 404);
      });
    };
    const app = new CaptureApp(new ApiClient({ baseUrl: "http://svc", fetchImpl: impl }));
    await app.submitCapture(new Blob(["x"]), "capture.zip");
    expect(app.current().phase).toBe("ready");
    expect(app.current().splatCount).toBe(2);
    app.dispose();
  });

  it("surfaces pipeline failures with the service error message", async () => {
    const { impl } = mockService(
      [() => json(view({ state: "failed", error: "frame extraction failed" }))],
      new Uint8Array()
    );
    const app = new CaptureApp(new ApiClient({ baseUrl: "http://svc", fetchImpl: impl }));
    await app.submitCapture(new Blob(["x"]), "capture.mp4");
    await vi.advanceTimersByTimeAsync(0);

    expect(app.current().phase).toBe("failed");
    expect(app.current().error).toBe("frame extraction failed");
    expect(app.current().viewerActive).toBe(false);
    app.dispose();
  });

  it("fails the flow when the job vanishes mid-poll", async () => {
    const { impl } = mockService([() => json({ detail: "job not found" }, 404)], new Uint8Array());
    const app = new CaptureApp(new ApiClient({ baseUrl: "http://svc", fetchImpl: impl }));
    await app.submitCapture(new Blob(["x"]), "capture.mp4");
    await vi.advanceTimersByTimeAsync(0);

    expect(app.current().phase).toBe("failed");
    expect(app.current().error).toBe("job not found");
    app.dispose();
  });

  it("reports upload rejections without starting a poller", async () => {
    const impl: FetchLike = () => Promise.resolve(json({ detail: "unsupported capture type" }, 415));
    const app = new CaptureApp(new ApiClient({ baseUrl: "http://svc", fetchImpl: impl }));
    await app.submitCapture(new Blob(["x"]), "capture.gif");
    expect(app.current().phase).toBe("failed");
    expect(app.current().error).toBe("unsupported capture type");
    await vi.advanceTimersByTimeAsync(60_000);
    expect(app.current().phase).toBe("failed");
    app.dispose();
  });
});
