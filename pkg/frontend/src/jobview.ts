// Pure derivation of the view model from a job state snapshot.
// All UI state comes from /api/jobs responses, so a page reload
// reconstructs the identical view.

import type { JobState } from "./api.js";

export interface JobView {
  jobId: string;
  status: string;
  candidateUrls: string[];
  vqaPick: number | null; // 1-based, the service's suggested candidate
  override: number | null; // 1-based, shown only while AwaitingSelection
  overrideEnabled: boolean;
  meshUrl: string | null; // present iff status === "Done"
  flatness: { isFlat: boolean; flatFraction: number } | null;
  thinness: { ratio: number; flagged: boolean } | null;
  error: string | null;
}

export function deriveJobView(
  state: JobState,
  artifactUrl: (name: string) => string,
  pendingOverride: number | null = null,
): JobView {
  const candidateUrls: string[] = [];
  for (let i = 0; i < state.candidate_count; i++) {
    candidateUrls.push(artifactUrl(`candidates/cand_${i}.png`));
  }

  const manifest = state.manifest;
  const selection = manifest?.selection ?? null;
  let vqaPick: number | null = null;
  let override: number | null = null;
  if (selection) {
    if (selection.method === "user_override") {
      override = selection.chosen_index;
    } else {
      vqaPick = selection.chosen_index;
    }
  }

  const awaiting = state.status === "AwaitingSelection";
  if (awaiting) {
    override = pendingOverride;
  }

  const flatnessDiag = manifest?.diagnostics?.["flatness"];
  const thinnessDiag =
    manifest?.diagnostics?.["final_thinness"] ??
    manifest?.diagnostics?.["baseline_thinness"];

  return {
    jobId: state.job_id,
    status: state.status,
    candidateUrls,
    vqaPick,
    override: awaiting || selection?.method === "user_override" ? override : null,
    overrideEnabled: awaiting,
    meshUrl: state.status === "Done" ? artifactUrl("final.ply") : null,
    flatness: flatnessDiag
      ? { isFlat: !!flatnessDiag.is_flat, flatFraction: flatnessDiag.flat_pixel_fraction ?? 0 }
      : null,
    thinness: thinnessDiag
      ? { ratio: thinnessDiag.thinness_ratio, flagged: !!thinnessDiag.flagged_thin }
      : null,
    error: state.error,
  };
}
