/**
 * Orbit-camera viewer state and draw-list construction.
 *
 * The camera orbits a target point: azimuth/elevation/distance plus a model
 * scale factor. Splats become screen-aligned quads with Gaussian falloff,
 * depth-sorted back to front and shaded with the view-independent DC color.
 * Sorting is amortized: the list is only resorted once the view direction
 * moves more than one degree.
 */

import { COLUMN, type SplatCloud } from "./ply.js";

export type Vec3 = [number, number, number];

export interface OrbitCamera {
  /** Horizontal angle in radians; unbounded, wraps visually. */
  azimuth: number;
  /** Vertical angle in radians, clamped inside (-pi/2, pi/2). */
  elevation: number;
  /** Distance from the target, always > 0. */
  distance: number;
  target: Vec3;
}

export interface ViewerState {
  camera: OrbitCamera;
  /** Uniform model scale factor, always > 0. */
  modelScale: number;
  /** Exponential moving average of frames per second. */
  fpsEstimate: number;
}

export const ELEVATION_LIMIT = Math.PI / 2 - 1e-4;
export const MIN_DISTANCE = 1e-3;
const ROTATE_RATE = 0.005; // radians per pixel dragged
const PAN_RATE = 0.0015; // world units per pixel per unit distance
const ZOOM_RATE = 0.0015; // log-distance per wheel unit
export const RESORT_ANGLE_RAD = (1 * Math.PI) / 180;

const STRIDE = 62;
const SH_C0 = 0.28209479177387814;

export function createViewerState(bounds?: { center: Vec3; radius: number }): ViewerState {
  const center: Vec3 = bounds ? [...bounds.center] : [0, 0, 0];
  const radius = bounds && bounds.radius > 0 ? bounds.radius : 1;
  return {
    camera: { azimuth: 0, elevation: 0.3, distance: 2.5 * radius, target: center },
    modelScale: 1,
    fpsEstimate: 0,
  };
}

/** Axis-aligned bounds of a cloud, for framing the initial camera. */
export function cloudBounds(cloud: SplatCloud): { center: Vec3; radius: number } {
  if (cloud.count === 0) return { center: [0, 0, 0], radius: 1 };
  const lo: Vec3 = [Infinity, Infinity, Infinity];
  const hi: Vec3 = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < cloud.count; i++) {
    for (let axis = 0; axis < 3; axis++) {
      const v = cloud.values[i * STRIDE + axis]!;
      if (v < lo[axis]!) lo[axis] = v;
      if (v > hi[axis]!) hi[axis] = v;
    }
  }
  const center: Vec3 = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2];
  const radius = Math.max(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) / 2;
  return { center, radius: radius > 0 ? radius : 1 };
}

/** Drag rotation: positive dx increases azimuth, positive dy raises elevation. */
export function rotate(state: ViewerState, dxPixels: number, dyPixels: number): void {
  const camera = state.camera;
  camera.azimuth += dxPixels * ROTATE_RATE;
  camera.elevation = Math.min(
    ELEVATION_LIMIT,
    Math.max(-ELEVATION_LIMIT, camera.elevation + dyPixels * ROTATE_RATE)
  );
}

/** Wheel/pinch zoom: positive delta moves the camera away (distance grows). */
export function zoom(state: ViewerState, wheelDelta: number): void {
  const camera = state.camera;
  camera.distance = Math.max(MIN_DISTANCE, camera.distance * Math.exp(wheelDelta * ZOOM_RATE));
}

/** Secondary drag: slide the orbit target in the camera's image plane. */
export function pan(state: ViewerState, dxPixels: number, dyPixels: number): void {
  const camera = state.camera;
  const { right, up } = cameraBasis(camera);
  const step = PAN_RATE * camera.distance;
  for (let axis = 0; axis < 3; axis++) {
    camera.target[axis] = camera.target[axis]! + (-dxPixels * right[axis]! + dyPixels * up[axis]!) * step;
  }
}

export function setModelScale(state: ViewerState, scale: number): void {
  if (Number.isFinite(scale) && scale > 0) state.modelScale = scale;
}

export function updateFps(state: ViewerState, frameMs: number): number {
  if (frameMs > 0) {
    const instant = 1000 / frameMs;
    state.fpsEstimate = state.fpsEstimate === 0 ? instant : 0.9 * state.fpsEstimate + 0.1 * instant;
  }
  return state.fpsEstimate;
}

/** Unit vector from the target toward the camera. */
export function viewDirection(camera: OrbitCamera): Vec3 {
  const ce = Math.cos(camera.elevation);
  return [
    ce * Math.cos(camera.azimuth),
    Math.sin(camera.elevation),
    ce * Math.sin(camera.azimuth),
  ];
}

export function cameraPosition(camera: OrbitCamera): Vec3 {
  const dir = viewDirection(camera);
  return [
    camera.target[0] + dir[0] * camera.distance,
    camera.target[1] + dir[1] * camera.distance,
    camera.target[2] + dir[2] * camera.distance,
  ];
}

export function cameraBasis(camera: OrbitCamera): { right: Vec3; up: Vec3; forward: Vec3 } {
  const toCamera = viewDirection(camera);
  // forward points from the camera toward the target
  const forward: Vec3 = [-toCamera[0], -toCamera[1], -toCamera[2]];
  const worldUp: Vec3 = [0, 1, 0];
  const right: Vec3 = [
    forward[1] * worldUp[2] - forward[2] * worldUp[1],
    forward[2] * worldUp[0] - forward[0] * worldUp[2],
    forward[0] * worldUp[1] - forward[1] * worldUp[0],
  ];
  const norm = Math.hypot(right[0], right[1], right[2]) || 1;
  right[0] /= norm;
  right[1] /= norm;
  right[2] /= norm;
  const up: Vec3 = [
    right[1] * forward[2] - right[2] * forward[1],
    right[2] * forward[0] - right[0] * forward[2],
    right[0] * forward[1] - right[1] * forward[0],
  ];
  return { right, up, forward };
}

/** One screen-aligned quad, emitted back to front. */
export interface SplatQuad {
  /** Pixel center. */
  x: number;
  y: number;
  /** Gaussian sigma in pixels (quads extend to about 3 sigma). */
  radiusPx: number;
  depth: number;
  color: [number, number, number];
  opacity: number;
}

export interface Viewport {
  width: number;
  height: number;
  /** Vertical field of view in radians. */
  fovY: number;
}

function sigmoid(x: number): number {
  return 1 / (1 + Math.exp(-x));
}

/**
 * Builds depth-sorted draw lists, reusing the previous sort order until the
 * view direction has moved more than one degree.
 */
export class DrawListBuilder {
  private order: Uint32Array | null = null;
  private sortedDirection: Vec3 | null = null;
  readonly positions: Float32Array;
  private readonly colors: Float32Array;
  private readonly opacities: Float32Array;
  private readonly sigmas: Float32Array;

  constructor(private readonly cloud: SplatCloud) {
    const n = cloud.count;
    this.positions = new Float32Array(n * 3);
    this.colors = new Float32Array(n * 3);
    this.opacities = new Float32Array(n);
    this.sigmas = new Float32Array(n);
    const xCol = COLUMN["x"]!;
    const dcCol = COLUMN["f_dc_0"]!;
    const opacityCol = COLUMN["opacity"]!;
    const scaleCol = COLUMN["scale_0"]!;
    for (let i = 0; i < n; i++) {
      const row = i * STRIDE;
      for (let axis = 0; axis < 3; axis++) {
        this.positions[i * 3 + axis] = cloud.values[row + xCol + axis]!;
        const dc = cloud.values[row + dcCol + axis]!;
        this.colors[i * 3 + axis] = Math.min(1, Math.max(0, SH_C0 * dc + 0.5));
      }
      this.opacities[i] = sigmoid(cloud.values[row + opacityCol]!);
      // isotropic footprint from the mean axis scale
      const s0 = Math.exp(cloud.values[row + scaleCol]!);
      const s1 = Math.exp(cloud.values[row + scaleCol + 1]!);
      const s2 = Math.exp(cloud.values[row + scaleCol + 2]!);
      this.sigmas[i] = (s0 + s1 + s2) / 3;
    }
  }

  /** True when the camera has turned enough to invalidate the sort order. */
  needsResort(camera: OrbitCamera): boolean {
    if (this.order === null || this.sortedDirection === null) return true;
    const dir = viewDirection(camera);
    const dot = Math.min(
      1,
      Math.max(
        -1,
        dir[0] * this.sortedDirection[0] +
          dir[1] * this.sortedDirection[1] +
          dir[2] * this.sortedDirection[2]
      )
    );
    return Math.acos(dot) > RESORT_ANGLE_RAD;
  }

  /** Splat indices ordered far to near along the current view. */
  sortedOrder(camera: OrbitCamera, modelScale: number): Uint32Array {
    if (!this.needsResort(camera)) return this.order!;
    const eye = cameraPosition(camera);
    const { forward } = cameraBasis(camera);
    const n = this.cloud.count;
    const depths = new Float64Array(n);
    const target = camera.target;
    for (let i = 0; i < n; i++) {
      const x = target[0] + (this.positions[i * 3]! - target[0]) * modelScale - eye[0];
      const y = target[1] + (this.positions[i * 3 + 1]! - target[1]) * modelScale - eye[1];
      const z = target[2] + (this.positions[i * 3 + 2]! - target[2]) * modelScale - eye[2];
      depths[i] = x * forward[0] + y * forward[1] + z * forward[2];
    }
    const order = new Uint32Array(n);
    for (let i = 0; i < n; i++) order[i] = i;
    // back to front: larger depth first
    order.sort((a, b) => depths[b]! - depths[a]!);
    this.order = order;
    this.sortedDirection = viewDirection(camera);
    return order;
  }

  /** Projects visible splats to quads, back to front. */
  build(state: ViewerState, viewport: Viewport): SplatQuad[] {
    const camera = state.camera;
    const order = this.sortedOrder(camera, state.modelScale);
    const eye = cameraPosition(camera);
    const { right, up, forward } = cameraBasis(camera);
    const focalPx = viewport.height / 2 / Math.tan(viewport.fovY / 2);
    const quads: SplatQuad[] = [];
    const target = camera.target;
    for (const i of order) {
      const scale = state.modelScale;
      const px = target[0] + (this.positions[i * 3]! - target[0]) * scale - eye[0];
      const py = target[1] + (this.positions[i * 3 + 1]! - target[1]) * scale - eye[1];
      const pz = target[2] + (this.positions[i * 3 + 2]! - target[2]) * scale - eye[2];
      const depth = px * forward[0] + py * forward[1] + pz * forward[2];
      if (depth <= MIN_DISTANCE) continue;
      const sx = px * right[0] + py * right[1] + pz * right[2];
      const sy = px * up[0] + py * up[1] + pz * up[2];
      const x = viewport.width / 2 + (focalPx * sx) / depth;
      const y = viewport.height / 2 - (focalPx * sy) / depth;
      const radiusPx = (focalPx * this.sigmas[i]! * scale) / depth;
      if (!Number.isFinite(x) || !Number.isFinite(y) || radiusPx <= 0) continue;
      // skip quads entirely outside the frame (3 sigma extent)
      const extent = 3 * radiusPx;
      if (x + extent < 0 || x - extent > viewport.width || y + extent < 0 || y - extent > viewport.height) {
        continue;
      }
      quads.push({
        x,
        y,
        radiusPx,
        depth,
        color: [this.colors[i * 3]!, this.colors[i * 3 + 1]!, this.colors[i * 3 + 2]!],
        opacity: this.opacities[i]!,
      });
    }
    return quads;
  }
}
