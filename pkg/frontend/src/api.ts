// Thin client for the flatlift job service JSON API.

export interface StageRecord {
  name: string;
  cache_hit: boolean;
  warnings: string[];
}

export interface JobManifest {
  run_id: string;
  stages: StageRecord[];
  selection: { chosen_index: number; method: string; rationale: string } | null;
  diagnostics: Record<string, any>;
}

export interface JobState {
  job_id: string;
  status: string;
  awaiting_selection: boolean;
  candidate_count: number;
  error: string | null;
  manifest: JobManifest | null;
}

export const MAX_UPLOAD_BYTES = 20 * 1024 * 1024;
const PNG_MAGIC = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

/** Client-side upload validation; returns an error message or null. */
export function validateUpload(name: string, size: number, head: Uint8Array): string | null {
  if (size >= MAX_UPLOAD_BYTES) {
    return `file is ${(size / 1024 / 1024).toFixed(1)} MB; the limit is 20 MB`;
  }
  const magicOk =
    head.length >= PNG_MAGIC.length && PNG_MAGIC.every((b, i) => head[i] === b);
  if (!magicOk) {
    return `${name} is not a PNG file`;
  }
  return null;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async submitJob(file: Blob, interactive: boolean, config: Record<string, unknown> = {}): Promise<string> {
    const form = new FormData();
    form.append("file", file, "input.png");
    form.append("config", JSON.stringify({ ...config, interactive }));
    const res = await fetch(`${this.baseUrl}/api/jobs`, { method: "POST", body: form });
    if (!res.ok) {
      throw new Error(await extractError(res));
    }
    const body = (await res.json()) as { job_id: string };
    return body.job_id;
  }

  async getJob(jobId: string): Promise<JobState> {
    const res = await fetch(`${this.baseUrl}/api/jobs/${jobId}`);
    if (!res.ok) {
      throw new Error(await extractError(res));
    }
    return (await res.json()) as JobState;
  }

  async selectCandidate(jobId: string, index: number): Promise<void> {
    const res = await fetch(`${this.baseUrl}/api/jobs/${jobId}/select`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ index }),
    });
    if (!res.ok) {
      throw new Error(await extractError(res));
    }
  }

  artifactUrl(jobId: string, name: string): string {
    return `${this.baseUrl}/api/jobs/${jobId}/artifact/${name}`;
  }

  async fetchArtifact(jobId: string, name: string): Promise<ArrayBuffer> {
    const res = await fetch(this.artifactUrl(jobId, name));
    if (!res.ok) {
      throw new Error(await extractError(res));
    }
    return res.arrayBuffer();
  }
}

async function extractError(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") {
      return body.detail;
    }
  } catch {
    // fall through to the status line
  }
  return `${res.status} ${res.statusText}`;
}
