import { describe, expect, it } from "vitest";

import type { JobState } from "../src/api.js";
import { deriveJobView } from "../src/jobview.js";

const artifactUrl = (name: string) => `/api/jobs/j1/artifact/${name}`;

function state(overrides: Partial<JobState> = {}): JobState {
  return {
    job_id: "j1",
    status: "Queued",
    awaiting_selection: false,
    candidate_count: 0,
    error: null,
    manifest: null,
    ...overrides,
  };
}

describe("deriveJobView", () => {
  it("queued job has no candidates, no mesh, no override", () => {
    const view = deriveJobView(state(), artifactUrl);
    expect(view.candidateUrls).toEqual([]);
    expect(view.meshUrl).toBeNull();
    expect(view.override).toBeNull();
    expect(view.overrideEnabled).toBe(false);
  });

  it("awaiting selection exposes candidate urls and enables override", () => {
    const view = deriveJobView(
      state({ status: "AwaitingSelection", awaiting_selection: true, candidate_count: 4 }),
      artifactUrl,
      2,
    );
    expect(view.candidateUrls).toHaveLength(4);
    expect(view.candidateUrls[0]).toBe("/api/jobs/j1/artifact/candidates/cand_0.png");
    expect(view.overrideEnabled).toBe(true);
    expect(view.override).toBe(2);
    expect(view.meshUrl).toBeNull();
  });

  it("override is cleared once the job moves past AwaitingSelection", () => {
    const view = deriveJobView(
      state({ status: "ShapeReady", candidate_count: 4 }),
      artifactUrl,
      2,
    );
    expect(view.overrideEnabled).toBe(false);
    expect(view.override).toBeNull();
  });

  it("mesh url present iff Done", () => {
    const done = deriveJobView(state({ status: "Done", candidate_count: 4 }), artifactUrl);
    expect(done.meshUrl).toBe("/api/jobs/j1/artifact/final.ply");
    for (const status of ["Queued", "ConditionsReady", "CandidatesReady", "ShapeReady", "Failed"]) {
      expect(deriveJobView(state({ status }), artifactUrl).meshUrl).toBeNull();
    }
  });

  it("vqa pick badged from manifest selection", () => {
    const manifest = {
      run_id: "r",
      stages: [],
      selection: { chosen_index: 3, method: "vqa", rationale: "" },
      diagnostics: {},
    };
    const view = deriveJobView(
      state({ status: "Done", candidate_count: 4, manifest }),
      artifactUrl,
    );
    expect(view.vqaPick).toBe(3);
    expect(view.override).toBeNull();
  });

  it("user_override selection reported as override, not vqa pick", () => {
    const manifest = {
      run_id: "r",
      stages: [],
      selection: { chosen_index: 2, method: "user_override", rationale: "" },
      diagnostics: {},
    };
    const view = deriveJobView(
      state({ status: "Done", candidate_count: 4, manifest }),
      artifactUrl,
    );
    expect(view.override).toBe(2);
    expect(view.vqaPick).toBeNull();
  });

  it("diagnostics summarize flatness and thinness", () => {
    const manifest = {
      run_id: "r",
      stages: [],
      selection: null,
      diagnostics: {
        flatness: { is_flat: true, flat_pixel_fraction: 0.98 },
        final_thinness: { thinness_ratio: 0.05, flagged_thin: true },
      },
    };
    const view = deriveJobView(state({ status: "Done", manifest }), artifactUrl);
    expect(view.flatness).toEqual({ isFlat: true, flatFraction: 0.98 });
    expect(view.thinness).toEqual({ ratio: 0.05, flagged: true });
  });

  it("pure function of the snapshot: same input, same view (refresh-safe)", () => {
    const snapshot = state({
      status: "AwaitingSelection",
      awaiting_selection: true,
      candidate_count: 4,
    });
    const a = deriveJobView(snapshot, artifactUrl, null);
    const b = deriveJobView(JSON.parse(JSON.stringify(snapshot)), artifactUrl, null);
    expect(a).toEqual(b);
  });
});
