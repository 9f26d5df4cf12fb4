/**
 * HTTP client for the reconstruction service.
 *
 * Endpoints consumed: POST /jobs (multipart field `capture`), GET /jobs/{id},
 * GET /jobs/{id}/model.ply, GET /jobs/{id}/preview.png, DELETE /jobs/{id},
 * GET /healthz. Job polling runs at a fixed 2 s cadence with exponential
 * backoff on failures and never keeps more than one request in flight.
 */

import { z } from "zod";

export const JOB_STATES = ["queued", "extracting", "sfm", "training", "ready", "failed"] as const;
export type JobState = (typeof JOB_STATES)[number];

const jobViewSchema = z.object({
  id: z.string().min(1),
  state: z.enum(JOB_STATES),
  progress: z.object({ iteration: z.number().int().min(0), total: z.number().int().min(0) }),
  error: z.string().optional(),
  created: z.string(),
  updated: z.string(),
});

export type JobView = z.infer<typeof jobViewSchema>;

export function isTerminal(state: JobState): boolean {
  return state === "ready" || state === "failed";
}

/** Completed fraction in [0, 1] for progress display. */
export function progressFraction(view: JobView): number {
  if (view.state === "ready") return 1;
  if (view.progress.total <= 0) return 0;
  return Math.min(1, view.progress.iteration / view.progress.total);
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiClientOptions {
  baseUrl: string;
  fetchImpl?: FetchLike;
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error bodies fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
  }

  url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async uploadCapture(capture: Blob, filename: string): Promise<JobView> {
    const form = new FormData();
    form.append("capture", capture, filename);
    const response = await this.fetchImpl(this.url("/jobs"), { method: "POST", body: form });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return jobViewSchema.parse(await response.json());
  }

  async getJob(id: string): Promise<JobView> {
    const response = await this.fetchImpl(this.url(`/jobs/${id}`));
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return jobViewSchema.parse(await response.json());
  }

  async fetchModel(id: string): Promise<ArrayBuffer> {
    const response = await this.fetchImpl(this.url(`/jobs/${id}/model.ply`));
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return response.arrayBuffer();
  }

  previewUrl(id: string): string {
    return this.url(`/jobs/${id}/preview.png`);
  }

  async deleteJob(id: string): Promise<void> {
    const response = await this.fetchImpl(this.url(`/jobs/${id}`), { method: "DELETE" });
    if (!response.ok && response.status !== 404) {
      throw new ApiError(response.status, await errorMessage(response));
    }
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchImpl(this.url("/healthz"));
      return response.ok;
    } catch {
      return false;
    }
  }
}

export interface PollerHooks {
  onUpdate?: (view: JobView) => void;
  onReady?: (view: JobView) => void;
  onFailed?: (view: JobView) => void;
  /** Transient poll failure; the poller backs off and retries. */
  onError?: (error: unknown, consecutiveFailures: number) => void;
  /** The job no longer exists; polling stops. */
  onGone?: () => void;
}

export const POLL_INTERVAL_MS = 2000;
export const MAX_BACKOFF_MS = 30_000;

export class JobPoller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private stopped = false;
  private failures = 0;

  constructor(
    private readonly client: ApiClient,
    private readonly jobId: string,
    private readonly hooks: PollerHooks
  ) {}

  start(): void {
    this.stopped = false;
    void this.pollOnce();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** Current retry delay: 2 s normally, doubling per consecutive failure. */
  private delayMs(): number {
    if (this.failures === 0) return POLL_INTERVAL_MS;
    return Math.min(POLL_INTERVAL_MS * 2 ** this.failures, MAX_BACKOFF_MS);
  }

  private schedule(): void {
    if (this.stopped || this.timer !== null) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.pollOnce();
    }, this.delayMs());
  }

  private async pollOnce(): Promise<void> {
    if (this.stopped || this.inFlight) return;
    this.inFlight = true;
    try {
      const view = await this.client.getJob(this.jobId);
      this.failures = 0;
      this.hooks.onUpdate?.(view);
      if (view.state === "ready") {
        this.stopped = true;
        this.hooks.onReady?.(view);
        return;
      }
      if (view.state === "failed") {
        this.stopped = true;
        this.hooks.onFailed?.(view);
        return;
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.stopped = true;
        this.hooks.onGone?.();
        return;
      }
      this.failures += 1;
      this.hooks.onError?.(error, this.failures);
    } finally {
      this.inFlight = false;
    }
    this.schedule();
  }
}
