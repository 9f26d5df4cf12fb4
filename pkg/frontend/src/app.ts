/**
 * Application controller: drives the capture-to-viewer flow without touching
 * the DOM, so the whole lifecycle is scriptable. A UI layer subscribes via
 * `onChange` and renders the snapshot; interactions are forwarded to the
 * viewer handlers.
 */

import { ApiClient, JobPoller, isTerminal, progressFraction, type JobState, type JobView } from "./api.js";
import { parseSplatPly, type SplatCloud } from "./ply.js";
import {
  DrawListBuilder,
  cloudBounds,
  createViewerState,
  pan,
  rotate,
  setModelScale,
  zoom,
  type SplatQuad,
  type ViewerState,
  type Viewport,
} from "./viewer.js";

export type AppPhase = "idle" | "uploading" | "processing" | "ready" | "failed";

export interface AppSnapshot {
  phase: AppPhase;
  jobId: string | null;
  jobState: JobState | null;
  /** Completed fraction in [0, 1]. */
  progress: number;
  error: string | null;
  /** True once the viewer holds a parsed model. */
  viewerActive: boolean;
  splatCount: number;
}

export class Viewer {
  readonly state: ViewerState;
  private readonly builder: DrawListBuilder;

  constructor(readonly cloud: SplatCloud) {
    this.state = createViewerState(cloudBounds(cloud));
    this.builder = new DrawListBuilder(cloud);
  }

  rotate(dx: number, dy: number): void {
    rotate(this.state, dx, dy);
  }

  zoom(delta: number): void {
    zoom(this.state, delta);
  }

  pan(dx: number, dy: number): void {
    pan(this.state, dx, dy);
  }

  setModelScale(scale: number): void {
    setModelScale(this.state, scale);
  }

  drawList(viewport: Viewport): SplatQuad[] {
    return this.builder.build(this.state, viewport);
  }
}

export class CaptureApp {
  private snapshot: AppSnapshot = {
    phase: "idle",
    jobId: null,
    jobState: null,
    progress: 0,
    error: null,
    viewerActive: false,
    splatCount: 0,
  };
  private poller: JobPoller | null = null;
  viewer: Viewer | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly onChange: (snapshot: AppSnapshot) => void = () => {}
  ) {}

  current(): AppSnapshot {
    return { ...this.snapshot };
  }

  private update(patch: Partial<AppSnapshot>): void {
    this.snapshot = { ...this.snapshot, ...patch };
    this.onChange(this.current());
  }

  /** Uploads a capture and begins polling its job until it settles. */
  async submitCapture(capture: Blob, filename: string): Promise<void> {
    this.poller?.stop();
    this.viewer = null;
    this.update({
      phase: "uploading",
      jobId: null,
      jobState: null,
      progress: 0,
      error: null,
      viewerActive: false,
      splatCount: 0,
    });
    let view: JobView;
    try {
      view = await this.client.uploadCapture(capture, filename);
    } catch (error) {
      this.update({ phase: "failed", error: error instanceof Error ? error.message : String(error) });
      return;
    }
    this.applyJobView(view);
    if (!isTerminal(view.state)) {
      this.poller = new JobPoller(this.client, view.id, {
        onUpdate: (update) => this.applyJobView(update),
        onReady: (update) => void this.loadModel(update),
        onFailed: (update) =>
          this.update({ phase: "failed", jobState: update.state, error: update.error ?? "job failed" }),
        onGone: () => this.update({ phase: "failed", error: "job not found" }),
      });
      this.poller.start();
    } else if (view.state === "ready") {
      await this.loadModel(view);
    }
  }

  private applyJobView(view: JobView): void {
    this.update({
      phase: view.state === "failed" ? "failed" : view.state === "ready" ? "ready" : "processing",
      jobId: view.id,
      jobState: view.state,
      progress: progressFraction(view),
      error: view.error ?? null,
    });
  }

  private async loadModel(view: JobView): Promise<void> {
    try {
      const bytes = await this.client.fetchModel(view.id);
      const cloud = parseSplatPly(bytes);
      this.viewer = new Viewer(cloud);
      this.update({
        phase: "ready",
        jobState: view.state,
        progress: 1,
        viewerActive: true,
        splatCount: cloud.count,
      });
    } catch (error) {
      this.update({
        phase: "failed",
        error: error instanceof Error ? error.message : String(error),
      });
    }
  }

  dispose(): void {
    this.poller?.stop();
    this.poller = null;
  }
}
