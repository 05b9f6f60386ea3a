// DOM wiring: upload form, 1 s job polling, candidate grid with selection,
// and the mesh viewer canvas. All view state derives from /api/jobs
// snapshots (see jobview.ts), so reloading the page with ?job=<id>
// reconstructs the same view.

import { ApiClient, validateUpload, type JobState } from "./api.js";
import { deriveJobView, type JobView } from "./jobview.js";
import { parsePly, type ParsedMesh } from "./ply.js";
import { MeshViewer, foregroundPixelCount } from "./viewer.js";

const POLL_INTERVAL_MS = 1000;

const api = new ApiClient("");
let jobId: string | null = null;
let pendingOverride: number | null = null;
let selecting = false;
let pollTimer: ReturnType<typeof setTimeout> | null = null;
let pollInFlight = false;
let viewer: MeshViewer | null = null;
let meshLoadedFor: string | null = null;

const el = (id: string) => document.getElementById(id)!;

export function init(): void {
  const input = el("file-input") as HTMLInputElement;
  const interactive = el("interactive") as HTMLInputElement;
  el("upload-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const file = input.files?.[0];
    if (!file) return;
    const head = new Uint8Array(await file.slice(0, 8).arrayBuffer());
    const problem = validateUpload(file.name, file.size, head);
    if (problem) {
      showError(problem); // invalid files never reach the network
      return;
    }
    showError(null);
    try {
      jobId = await api.submitJob(file, interactive.checked);
      history.replaceState(null, "", `?job=${jobId}`);
      startPolling();
    } catch (e) {
      showError((e as Error).message);
    }
  });

  const canvas = el("mesh-canvas") as HTMLCanvasElement;
  attachOrbitControls(canvas);

  el("accept-suggestion").addEventListener("click", () => {
    const badge = document.querySelector(".candidate.badged figcaption");
    const match = badge?.textContent?.match(/#(\d+)/);
    if (match) void confirmSelection(parseInt(match[1], 10));
  });

  const existing = new URLSearchParams(location.search).get("job");
  if (existing) {
    jobId = existing;
    startPolling();
  }
}

function startPolling(): void {
  if (pollTimer) clearTimeout(pollTimer);
  const tick = async () => {
    if (!jobId || pollInFlight) return; // single in-flight poll per job
    pollInFlight = true;
    try {
      const state = await api.getJob(jobId);
      renderJob(state);
      if (state.status !== "Done" && state.status !== "Failed") {
        pollTimer = setTimeout(tick, POLL_INTERVAL_MS);
      }
    } catch (e) {
      showError((e as Error).message);
    } finally {
      pollInFlight = false;
    }
  };
  void tick();
}

function renderJob(state: JobState): void {
  const view = deriveJobView(
    state,
    (name) => api.artifactUrl(state.job_id, name),
    pendingOverride,
  );
  el("status").textContent = view.status;
  showError(view.error);
  renderDiagnostics(view);
  renderCandidates(view);
  if (view.meshUrl && meshLoadedFor !== state.job_id) {
    meshLoadedFor = state.job_id; // load once; orbiting never refetches
    void loadMesh(state.job_id);
  }
}

function renderDiagnostics(view: JobView): void {
  const parts: string[] = [];
  if (view.flatness) {
    parts.push(
      `flat input: ${view.flatness.isFlat ? "yes" : "no"} ` +
        `(${(view.flatness.flatFraction * 100).toFixed(1)}% flat pixels)`,
    );
  }
  if (view.thinness) {
    parts.push(`thinness ratio: ${view.thinness.ratio.toFixed(3)}`);
  }
  el("diagnostics").textContent = parts.join(" — ");
  const badge = el("thin-badge");
  badge.hidden = !(view.thinness && view.thinness.flagged);
}

function renderCandidates(view: JobView): void {
  const grid = el("candidates");
  grid.innerHTML = "";
  view.candidateUrls.forEach((url, i) => {
    const index = i + 1;
    const cell = document.createElement("figure");
    cell.className = "candidate";
    const img = document.createElement("img");
    img.src = url;
    img.alt = `candidate ${index}`;
    cell.appendChild(img);
    const caption = document.createElement("figcaption");
    caption.textContent = `#${index}`;
    if (index === view.vqaPick) {
      caption.textContent += " (suggested)";
      cell.classList.add("badged");
    }
    if (index === view.override) cell.classList.add("chosen");
    cell.appendChild(caption);
    if (view.overrideEnabled && !selecting) {
      cell.classList.add("clickable");
      cell.addEventListener("click", () => void confirmSelection(index));
    }
    grid.appendChild(cell);
  });
  (el("accept-suggestion") as HTMLButtonElement).hidden = !(
    view.overrideEnabled && view.vqaPick !== null
  );
}

async function confirmSelection(index: number): Promise<void> {
  if (!jobId || selecting) return;
  selecting = true; // grid disabled until the POST resolves
  try {
    pendingOverride = index;
    await api.selectCandidate(jobId, index);
  } catch (e) {
    const message = (e as Error).message;
    showError(message.includes("409") ? "job already progressed" : message);
    pendingOverride = null;
  } finally {
    selecting = false;
  }
}

async function loadMesh(id: string): Promise<void> {
  const canvas = el("mesh-canvas") as HTMLCanvasElement;
  try {
    const buffer = await api.fetchArtifact(id, "final.ply");
    const mesh: ParsedMesh = parsePly(buffer);
    el("mesh-info").textContent =
      `${mesh.vertexCount} vertices, ${mesh.faceCount} triangles`;
    viewer = new MeshViewer(mesh);
    drawFrame(canvas);
  } catch {
    // parse failure: leave a raw download link instead of a dead canvas
    const link = document.createElement("a");
    link.href = api.artifactUrl(id, "final.ply");
    link.textContent = "download final.ply";
    el("mesh-info").replaceChildren(link);
  }
}

function drawFrame(canvas: HTMLCanvasElement): void {
  if (!viewer) return;
  const frame = viewer.render(canvas.width, canvas.height);
  if (foregroundPixelCount(frame) === 0) {
    showError("mesh rendered empty");
    return;
  }
  const ctx = canvas.getContext("2d")!;
  const pixels = new Uint8ClampedArray(frame.rgba); // copy onto a plain ArrayBuffer
  ctx.putImageData(new ImageData(pixels, frame.width, frame.height), 0, 0);
}

function attachOrbitControls(canvas: HTMLCanvasElement): void {
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("mousedown", (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
  });
  window.addEventListener("mouseup", () => (dragging = false));
  window.addEventListener("mousemove", (e) => {
    if (!dragging || !viewer) return;
    viewer.orbit((e.clientX - lastX) * 0.01, (e.clientY - lastY) * 0.01);
    lastX = e.clientX;
    lastY = e.clientY;
    drawFrame(canvas);
  });
  canvas.addEventListener("wheel", (e) => {
    if (!viewer) return;
    e.preventDefault();
    viewer.zoomBy(e.deltaY < 0 ? 1.1 : 1 / 1.1);
    drawFrame(canvas);
  });
}

function showError(message: string | null): void {
  const box = el("error");
  box.textContent = message ?? "";
  box.hidden = !message;
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  init();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", init);
}
