import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import {
  ApiClient,
  ApiError,
  type FetchLike,
  JobPoller,
  type JobState,
  type JobView,
  MAX_BACKOFF_MS,
  POLL_INTERVAL_MS,
  isTerminal,
  progressFraction,
} from "../src/api";

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

function scriptedFetch(script: Array<() => Response>): {
  impl: FetchLike;
  calls: Array<{ url: string; init?: RequestInit }>;
} {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const impl: FetchLike = (url, init) => {
    calls.push({ url, init });
    const step = script[Math.min(calls.length - 1, script.length - 1)]!;
    return Promise.resolve().then(step);
  };
  return { impl, calls };
}

describe("ApiClient", () => {
  it("uploads captures as multipart form data under the capture field", async () => {
    const { impl, calls } = scriptedFetch([() => json(view({ state: "queued" }), 201)]);
    const client = new ApiClient({ baseUrl: "http://svc/", fetchImpl: impl });
    const result = await client.uploadCapture(new Blob(["fake video bytes"]), "clip.mp4");

    expect(result.state).toBe("queued");
    expect(calls).toHaveLength(1);
    expect(calls[0]!.url).toBe("http://svc/jobs");
    expect(calls[0]!.init?.method).toBe("POST");
    const body = calls[0]!.init?.body;
    expect(body).toBeInstanceOf(FormData);
    const entry = (body as FormData).get("capture");
    expect(entry).toBeInstanceOf(Blob);
    expect((entry as File).name).toBe("clip.mp4");
    expect(await (entry as Blob).text()).toBe("fake video bytes");
  });

  it("surfaces service error details with the HTTP status", async () => {
    const { impl } = scriptedFetch([() => json({ detail: "capture too large" }, 413)]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    const failure = await client.uploadCapture(new Blob(["x"]), "clip.mp4").catch((e: unknown) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(413);
    expect((failure as ApiError).message).toBe("capture too large");
  });

  it("rejects job payloads that do not match the schema", async () => {
    const { impl } = scriptedFetch([() => json({ id: "job-1", state: "confused" })]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    await expect(client.getJob("job-1")).rejects.toThrow();
  });

  it("fetches model bytes verbatim", async () => {
    const payload = new Uint8Array([112, 108, 121, 0, 255]);
    const { impl, calls } = scriptedFetch([() => new Response(payload.slice())]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    const buffer = await client.fetchModel("job-1");
    expect(calls[0]!.url).toBe("http://svc/jobs/job-1/model.ply");
    expect(new Uint8Array(buffer)).toEqual(payload);
  });

  it("tolerates deleting a job that is already gone", async () => {
    const { impl } = scriptedFetch([() => json({ detail: "no such job" }, 404)]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    await expect(client.deleteJob("job-1")).resolves.toBeUndefined();
  });

  it("raises on other delete failures", async () => {
    const { impl } = scriptedFetch([() => json({ detail: "disk on fire" }, 500)]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    await expect(client.deleteJob("job-1")).rejects.toThrow("disk on fire");
  });
});

describe("progress helpers", () => {
  it("maps job state to completion fraction", () => {
    expect(progressFraction(view({ state: "ready" }))).toBe(1);
    expect(progressFraction(view({ state: "queued", progress: { iteration: 0, total: 0 } }))).toBe(0);
    expect(progressFraction(view({ state: "training", progress: { iteration: 150, total: 300 } }))).toBe(0.5);
    expect(progressFraction(view({ state: "training", progress: { iteration: 400, total: 300 } }))).toBe(1);
  });

  it("treats only ready and failed as terminal", () => {
    expect(isTerminal("ready")).toBe(true);
    expect(isTerminal("failed")).toBe(true);
    expect(isTerminal("queued")).toBe(false);
    expect(isTerminal("training")).toBe(false);
  });
});

describe("JobPoller", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("polls on a 2 s cadence and stops at the first terminal state", async () => {
    const { impl, calls } = scriptedFetch([
      () => json(view({ state: "queued" })),
      () => json(view({ state: "training", progress: { iteration: 50, total: 300 } })),
      () => json(view({ state: "training", progress: { iteration: 250, total: 300 } })),
      () => json(view({ state: "ready", progress: { iteration: 300, total: 300 } })),
    ]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    const states: string[] = [];
    let ready: JobView | null = null;
    const poller = new JobPoller(client, "job-1", {
      onUpdate: (v) => states.push(v.state),
      onReady: (v) => {
        ready = v;
      },
    });

    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(states).toEqual(["queued"]);

    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS - 1);
    expect(calls).toHaveLength(1);
    await vi.advanceTimersByTimeAsync(1);
    expect(states).toEqual(["queued", "training"]);

    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    expect(states).toEqual(["queued", "training", "training", "ready"]);
    expect(ready).not.toBeNull();
    expect(ready!.progress.iteration).toBe(300);

    await vi.advanceTimersByTimeAsync(10 * POLL_INTERVAL_MS);
    expect(calls).toHaveLength(4);
  });

  it("keeps at most one request in flight", async () => {
    let resolveGate!: (r: Response) => void;
    const gate = new Promise<Response>((resolve) => {
      resolveGate = resolve;
    });
    let calls = 0;
    const client = new ApiClient({
      baseUrl: "http://svc",
      fetchImpl: () => {
        calls += 1;
        return calls === 1 ? gate : Promise.resolve(json(view({ state: "queued" })));
      },
    });
    const poller = new JobPoller(client, "job-1", {});

    poller.start();
    await vi.advanceTimersByTimeAsync(10_000);
    poller.start();
    await vi.advanceTimersByTimeAsync(10_000);
    expect(calls).toBe(1);

    resolveGate(json(view({ state: "queued" })));
    await vi.advanceTimersByTimeAsync(0);
    expect(calls).toBe(1);
    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    expect(calls).toBe(2);
    poller.stop();
  });

  it("backs off exponentially on failures up to the 30 s cap", async () => {
    const boom = () => {
      throw new Error("connection refused");
    };
    const { impl, calls } = scriptedFetch([boom, boom, boom, boom, () => json(view({ state: "queued" }))]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    const failureCounts: number[] = [];
    const poller = new JobPoller(client, "job-1", {
      onError: (_e, consecutive) => failureCounts.push(consecutive),
    });

    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(calls).toHaveLength(1);

    await vi.advanceTimersByTimeAsync(4000 - 1);
    expect(calls).toHaveLength(1);
    await vi.advanceTimersByTimeAsync(1);
    expect(calls).toHaveLength(2);

    await vi.advanceTimersByTimeAsync(8000);
    expect(calls).toHaveLength(3);
    await vi.advanceTimersByTimeAsync(16_000);
    expect(calls).toHaveLength(4);

    await vi.advanceTimersByTimeAsync(MAX_BACKOFF_MS - 1);
    expect(calls).toHaveLength(4);
    await vi.advanceTimersByTimeAsync(1);
    expect(calls).toHaveLength(5);
    expect(failureCounts).toEqual([1, 2, 3, 4]);

    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    expect(calls).toHaveLength(6);
    poller.stop();
  });

  it("reports a vanished job and stops polling", async () => {
    const { impl, calls } = scriptedFetch([() => json({ detail: "job not found" }, 404)]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    let gone = false;
    const poller = new JobPoller(client, "job-1", {
      onGone: () => {
        gone = true;
      },
    });

    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(gone).toBe(true);
    await vi.advanceTimersByTimeAsync(60_000);
    expect(calls).toHaveLength(1);
  });

  it("routes failed jobs to the failure hook", async () => {
    const { impl, calls } = scriptedFetch([
      () => json(view({ state: "failed", error: "structure from motion produced no points" })),
    ]);
    const client = new ApiClient({ baseUrl: "http://svc", fetchImpl: impl });
    let failed: JobView | null = null;
    const poller = new JobPoller(client, "job-1", {
      onFailed: (v) => {
        failed = v;
      },
    });

    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(failed).not.toBeNull();
    expect(failed!.error).toContain("no points");
    await vi.advanceTimersByTimeAsync(60_000);
    expect(calls).toHaveLength(1);
  });
});
