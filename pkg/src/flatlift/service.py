"""HTTP job service wrapping the pipeline for the companion UI.

Jobs run on worker threads; interactive jobs pause at AwaitingSelection
until POST /select supplies an override index. manifest.json in the run
directory is the source of truth; there is no database.
"""

from __future__ import annotations

import json
import secrets
import threading
from enum import Enum
from pathlib import Path
from typing import Dict, Optional

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import FileResponse, JSONResponse

from .core import content_hash
from .errors import MalformedImage
from .pipeline import PipelineConfig, PipelineRun, compute_run_id


class JobStatus(Enum):
    QUEUED = "Queued"
    CONDITIONS_READY = "ConditionsReady"
    CANDIDATES_READY = "CandidatesReady"
    AWAITING_SELECTION = "AwaitingSelection"
    SHAPE_READY = "ShapeReady"
    DONE = "Done"
    FAILED = "Failed"


class Job:
    def __init__(self, job_id: str, run: PipelineRun, interactive: bool):
        self.job_id = job_id
        self.run = run
        self.interactive = interactive
        self.status = JobStatus.QUEUED
        self.error: Optional[str] = None
        self.override: Optional[int] = None
        self._select_event = threading.Event()
        self._lock = threading.Lock()
        self.thread: Optional[threading.Thread] = None

    def set_status(self, status: JobStatus):
        with self._lock:
            self.status = status

    def execute(self):
        try:
            self.run.stage_mask()
            self.run.stage_flatness()
            self.run.stage_conditions()
            self.set_status(JobStatus.CONDITIONS_READY)
            self.run.stage_caption()
            self.run.stage_candidates()
            self.set_status(JobStatus.CANDIDATES_READY)
            if self.interactive:
                self.set_status(JobStatus.AWAITING_SELECTION)
                self._select_event.wait()
            self.run.stage_select(self.override)
            self.run.stage_shape()
            self.set_status(JobStatus.SHAPE_READY)
            self.run.stage_bake()
            self.set_status(JobStatus.DONE)
        except Exception as e:
            self.error = f"{type(e).__name__}: {e}"
            self.set_status(JobStatus.FAILED)

    def select(self, index: int):
        with self._lock:
            if self.status is not JobStatus.AWAITING_SELECTION:
                raise HTTPException(409, "job is not awaiting selection")
            n = len(self.run.candidates)
            if not 1 <= index <= n:
                raise HTTPException(400, f"index must be in [1, {n}]")
            self.override = index
        self._select_event.set()

    def state(self) -> dict:
        manifest_path = self.run.out_dir / "manifest.json"
        manifest = None
        if manifest_path.exists():
            try:
                manifest = json.loads(manifest_path.read_text())
            except json.JSONDecodeError:
                manifest = None
        return {
            "job_id": self.job_id,
            "status": self.status.value,
            "awaiting_selection": self.status is JobStatus.AWAITING_SELECTION,
            "candidate_count": len(self.run.candidates),
            "error": self.error,
            "manifest": manifest,
        }


def _config_from_json(data: dict, runs_root: Path) -> PipelineConfig:
    kwargs = {}
    for key in ("n_canny", "n_depth", "seed", "single_condition_mode", "depth_invert"):
        if key in data:
            kwargs[key] = data[key]
    return PipelineConfig(**kwargs)


def create_app(runs_root, base_config: Optional[PipelineConfig] = None) -> FastAPI:
    runs_root = Path(runs_root)
    runs_root.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="flatlift")
    jobs: Dict[str, Job] = {}
    app.state.jobs = jobs

    @app.get("/api/health")
    def health():
        return {"ok": True}

    @app.post("/api/jobs")
    async def create_job(file: UploadFile = File(...), config: str = Form("{}")):
        try:
            cfg_json = json.loads(config)
        except json.JSONDecodeError as e:
            raise HTTPException(400, f"malformed config JSON: {e}")
        if not isinstance(cfg_json, dict):
            raise HTTPException(400, "config must be a JSON object")
        interactive = bool(cfg_json.pop("interactive", False))
        data = await file.read()
        try:
            cfg = _config_from_json(cfg_json, runs_root)
        except (ValueError, TypeError) as e:
            raise HTTPException(400, f"bad config: {e}")
        job_id = compute_run_id(data, cfg).hex
        if interactive:
            # interactive jobs get a nonce so concurrent runs never share dirs
            job_id = content_hash(
                bytes.fromhex(job_id) + secrets.token_bytes(8)
            ).hex
        if job_id in jobs:
            return {"job_id": job_id}
        try:
            run = PipelineRun(data, cfg, runs_root / job_id)
        except MalformedImage as e:
            raise HTTPException(400, f"bad PNG: {e}")
        job = Job(job_id, run, interactive)
        jobs[job_id] = job
        job.thread = threading.Thread(target=job.execute, daemon=True)
        job.thread.start()
        return {"job_id": job_id}

    def _get_job(job_id: str) -> Job:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job")
        return job

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        return _get_job(job_id).state()

    @app.get("/api/jobs/{job_id}/artifact/{name:path}")
    def get_artifact(job_id: str, name: str):
        job = _get_job(job_id)
        base = job.run.out_dir.resolve()
        path = (base / name).resolve()
        if not str(path).startswith(str(base)) or not path.is_file():
            raise HTTPException(404, "unknown artifact")
        return FileResponse(path)

    @app.post("/api/jobs/{job_id}/select")
    async def select(job_id: str, body: dict):
        job = _get_job(job_id)
        index = body.get("index")
        if not isinstance(index, int):
            raise HTTPException(400, "body must contain integer 'index'")
        job.select(index)
        return JSONResponse({"ok": True})

    return app


def serve(runs_root, port: int = 8000, host: str = "127.0.0.1"):
    import uvicorn

    app = create_app(runs_root)
    uvicorn.run(app, host=host, port=port, log_level="warning")
