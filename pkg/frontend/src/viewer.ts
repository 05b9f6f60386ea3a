// Software mesh viewer: orthographic projection with a z-buffer, flat
// per-vertex colors, and yaw/pitch/zoom camera state. Rendering targets a
// raw RGBA buffer so it works both on a browser canvas (putImageData) and
// headlessly under node.

import type { ParsedMesh } from "./ply.js";

export interface Camera {
  yaw: number; // radians around +y
  pitch: number; // radians around +x
  zoom: number; // scale factor, 1 = mesh fits the viewport
}

export interface Frame {
  width: number;
  height: number;
  rgba: Uint8ClampedArray;
}

const BACKGROUND: [number, number, number] = [24, 26, 32];

export class MeshViewer {
  camera: Camera = { yaw: 0, pitch: 0, zoom: 1 };

  constructor(private mesh: ParsedMesh) {}

  /** Center the mesh and scale its longest extent to 1. */
  private normalized(): Float32Array {
    const p = this.mesh.positions;
    const lo = [Infinity, Infinity, Infinity];
    const hi = [-Infinity, -Infinity, -Infinity];
    for (let i = 0; i < p.length; i += 3) {
      for (let a = 0; a < 3; a++) {
        lo[a] = Math.min(lo[a], p[i + a]);
        hi[a] = Math.max(hi[a], p[i + a]);
      }
    }
    const span = Math.max(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], 1e-12);
    const out = new Float32Array(p.length);
    for (let i = 0; i < p.length; i += 3) {
      for (let a = 0; a < 3; a++) {
        out[i + a] = (p[i + a] - (lo[a] + hi[a]) / 2) / span;
      }
    }
    return out;
  }

  render(width: number, height: number): Frame {
    const rgba = new Uint8ClampedArray(width * height * 4);
    for (let i = 0; i < width * height; i++) {
      rgba[i * 4] = BACKGROUND[0];
      rgba[i * 4 + 1] = BACKGROUND[1];
      rgba[i * 4 + 2] = BACKGROUND[2];
      rgba[i * 4 + 3] = 255;
    }

    const { yaw, pitch, zoom } = this.camera;
    const cy = Math.cos(yaw), sy = Math.sin(yaw);
    const cp = Math.cos(pitch), sp = Math.sin(pitch);
    const pos = this.normalized();
    const n = pos.length / 3;

    // rotate, then map [-0.5, 0.5] to pixels with a small margin
    const scale = Math.min(width, height) * 0.9 * zoom;
    const sx = new Float32Array(n);
    const syArr = new Float32Array(n);
    const sz = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      const x0 = pos[i * 3], y0 = pos[i * 3 + 1], z0 = pos[i * 3 + 2];
      const x1 = cy * x0 + sy * z0;
      const z1 = -sy * x0 + cy * z0;
      const y2 = cp * y0 - sp * z1;
      const z2 = sp * y0 + cp * z1;
      sx[i] = width / 2 + x1 * scale;
      syArr[i] = height / 2 - y2 * scale;
      sz[i] = z2;
    }

    const zbuf = new Float32Array(width * height).fill(-Infinity);
    const idx = this.mesh.indices;
    const colors = this.mesh.colors;
    for (let t = 0; t < idx.length; t += 3) {
      const a = idx[t], b = idx[t + 1], c = idx[t + 2];
      const ax = sx[a], ay = syArr[a];
      const bx = sx[b], by = syArr[b];
      const cx = sx[c], cyy = syArr[c];
      const area = (bx - ax) * (cyy - ay) - (by - ay) * (cx - ax);
      if (Math.abs(area) < 1e-12) continue;
      const minX = Math.max(0, Math.floor(Math.min(ax, bx, cx)));
      const maxX = Math.min(width - 1, Math.ceil(Math.max(ax, bx, cx)));
      const minY = Math.max(0, Math.floor(Math.min(ay, by, cyy)));
      const maxY = Math.min(height - 1, Math.ceil(Math.max(ay, by, cyy)));
      for (let py = minY; py <= maxY; py++) {
        for (let px = minX; px <= maxX; px++) {
          const x = px + 0.5, y = py + 0.5;
          const wc = ((bx - ax) * (y - ay) - (by - ay) * (x - ax)) / area;
          const wa = ((cx - bx) * (y - by) - (cyy - by) * (x - bx)) / area;
          const wb = 1 - wa - wc;
          if (wa < -1e-9 || wb < -1e-9 || wc < -1e-9) continue;
          const depth = wa * sz[a] + wb * sz[b] + wc * sz[c];
          const at = py * width + px;
          if (depth <= zbuf[at]) continue;
          zbuf[at] = depth;
          let r = 200, g = 200, bch = 200;
          if (colors) {
            r = Math.round(wa * colors[a * 3] + wb * colors[b * 3] + wc * colors[c * 3]);
            g = Math.round(wa * colors[a * 3 + 1] + wb * colors[b * 3 + 1] + wc * colors[c * 3 + 1]);
            bch = Math.round(wa * colors[a * 3 + 2] + wb * colors[b * 3 + 2] + wc * colors[c * 3 + 2]);
          }
          rgba[at * 4] = r;
          rgba[at * 4 + 1] = g;
          rgba[at * 4 + 2] = bch;
          rgba[at * 4 + 3] = 255;
        }
      }
    }
    return { width, height, rgba };
  }

  orbit(deltaYaw: number, deltaPitch: number): void {
    this.camera.yaw += deltaYaw;
    this.camera.pitch = Math.max(
      -Math.PI / 2,
      Math.min(Math.PI / 2, this.camera.pitch + deltaPitch),
    );
  }

  zoomBy(factor: number): void {
    this.camera.zoom = Math.max(0.05, Math.min(50, this.camera.zoom * factor));
  }
}

/** Count pixels that differ from the clear color; used by tests and the
 * empty-render guard in the app. */
export function foregroundPixelCount(frame: Frame): number {
  let count = 0;
  for (let i = 0; i < frame.rgba.length; i += 4) {
    if (
      frame.rgba[i] !== BACKGROUND[0] ||
      frame.rgba[i + 1] !== BACKGROUND[1] ||
      frame.rgba[i + 2] !== BACKGROUND[2]
    ) {
      count++;
    }
  }
  return count;
}
