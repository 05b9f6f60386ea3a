"""Flat-image benchmark harness: dataset manifest ingestion, batch pipeline
runs, and baseline-vs-pipeline thinness aggregation.

A procedural sprite generator ships in-repo so the harness runs without any
real dataset; real images drop in through the same manifest schema.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .backends import BackendSet
from .core import RasterImage, encode_image
from .errors import ManifestInvalid
from .pipeline import PipelineConfig, PipelineRun

MANIFEST_SCHEMA = 1
REPORT_SCHEMA = 1


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    path: str
    style: str = ""
    license: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: List[DatasetEntry]
    root: Path


@dataclass
class BenchRow:
    id: str
    is_flat: bool
    baseline_thinness: float
    pipeline_thinness: float
    baseline_flagged: bool
    pipeline_flagged: bool
    chosen_index: int
    selection_method: str
    wall_time_ms: float


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)
    errors: List[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)


def load_manifest(path) -> DatasetManifest:
    """Validate and load a dataset manifest; reports every violation."""
    path = Path(path)
    violations = []
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestInvalid([f"cannot read manifest: {e}"])
    if data.get("schema") != MANIFEST_SCHEMA:
        violations.append(f"unsupported schema {data.get('schema')}")
    entries_raw = data.get("entries", [])
    if not entries_raw:
        violations.append("entries list is empty")
    seen = set()
    entries = []
    for i, e in enumerate(entries_raw):
        eid = e.get("id")
        if not eid:
            violations.append(f"entry {i} missing id")
            continue
        if eid in seen:
            violations.append(f"duplicate id: {eid}")
        seen.add(eid)
        rel = e.get("path")
        if not rel:
            violations.append(f"entry {eid} missing path")
            continue
        full = path.parent / rel
        if not full.exists():
            violations.append(f"entry {eid}: file not found: {rel}")
        entries.append(
            DatasetEntry(eid, rel, e.get("style", ""), e.get("license", ""))
        )
    if violations:
        raise ManifestInvalid(violations)
    return DatasetManifest(data.get("name", path.stem), entries, path.parent)


def compute_aggregates(rows: List[BenchRow]) -> dict:
    n = len(rows)
    if n == 0:
        return {
            "n": 0,
            "flat_fraction": 0.0,
            "baseline_thin_rate": 0.0,
            "pipeline_thin_rate": 0.0,
            "mean_thinness_gain": 0.0,
        }
    return {
        "n": n,
        "flat_fraction": sum(r.is_flat for r in rows) / n,
        "baseline_thin_rate": sum(r.baseline_flagged for r in rows) / n,
        "pipeline_thin_rate": sum(r.pipeline_flagged for r in rows) / n,
        "mean_thinness_gain": sum(
            r.pipeline_thinness - r.baseline_thinness for r in rows
        )
        / n,
    }


def run_benchmark(
    manifest: DatasetManifest,
    cfg: PipelineConfig,
    work_dir,
    limit: Optional[int] = None,
    backend_set: Optional[BackendSet] = None,
) -> BenchReport:
    """Run the pipeline per entry with per-entry error isolation."""
    work_dir = Path(work_dir)
    report = BenchReport()
    entries = manifest.entries[:limit] if limit is not None else manifest.entries
    for entry in entries:
        started = time.monotonic()
        try:
            input_bytes = (manifest.root / entry.path).read_bytes()
            run = PipelineRun(input_bytes, cfg, work_dir / entry.id, backend_set)
            m = run.run()
            diag = m.diagnostics
            report.rows.append(
                BenchRow(
                    id=entry.id,
                    is_flat=diag["flatness"]["is_flat"],
                    baseline_thinness=diag["baseline_thinness"]["thinness_ratio"],
                    pipeline_thinness=diag["final_thinness"]["thinness_ratio"],
                    baseline_flagged=diag["baseline_thinness"]["flagged_thin"],
                    pipeline_flagged=diag["final_thinness"]["flagged_thin"],
                    chosen_index=m.selection["chosen_index"],
                    selection_method=m.selection["method"],
                    wall_time_ms=(time.monotonic() - started) * 1000.0,
                )
            )
        except Exception as e:
            report.errors.append({"id": entry.id, "error": f"{type(e).__name__}: {e}"})
    report.aggregates = compute_aggregates(report.rows)
    return report


_CSV_FIELDS = [
    "id",
    "is_flat",
    "baseline_thinness",
    "pipeline_thinness",
    "baseline_flagged",
    "pipeline_flagged",
    "chosen_index",
    "selection_method",
    "wall_time_ms",
]


def write_report(report: BenchReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return json.dumps(
            {
                "schema": REPORT_SCHEMA,
                "rows": [dataclasses.asdict(r) for r in report.rows],
                "errors": report.errors,
                "aggregates": report.aggregates,
            },
            indent=1,
            sort_keys=True,
        ).encode("utf-8")
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=_CSV_FIELDS, lineterminator="\r\n")
        writer.writeheader()
        for r in report.rows:
            writer.writerow(dataclasses.asdict(r))
        return out.getvalue().encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


# --------------------------------------------------------------------------
# Procedural fixture dataset


def _sprite(index: int, size: int = 64) -> RasterImage:
    """Deterministic flat-colored sprite: disks, squares, polygons, and
    simple two-tone cartoons on a white canvas."""
    rng = np.random.default_rng(1000 + index)
    canvas = np.full((size, size, 3), 255, dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]
    cx, cy = size / 2.0 + rng.integers(-5, 6), size / 2.0 + rng.integers(-5, 6)
    palette = np.array(
        [
            [200, 40, 40],
            [40, 140, 220],
            [40, 170, 80],
            [240, 180, 30],
            [150, 70, 190],
            [20, 20, 20],
        ],
        dtype=np.uint8,
    )
    color = palette[index % len(palette)]
    kind = index % 4
    r = size * (0.25 + 0.1 * float(rng.random()))
    if kind == 0:  # disk
        inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
    elif kind == 1:  # square
        inside = (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
    elif kind == 2:  # diamond
        inside = np.abs(xx - cx) + np.abs(yy - cy) <= 1.4 * r
    else:  # disk with a contrasting inner dot (two flat fills)
        inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
    canvas[inside] = color
    if kind == 3:
        dot = (xx - cx) ** 2 + (yy - cy) ** 2 <= (0.4 * r) ** 2
        canvas[dot] = palette[(index + 2) % len(palette)]
    return RasterImage.from_array(canvas)


def generate_procedural_dataset(out_dir, n: int = 100, size: int = 64) -> Path:
    """Write n sprites plus a schema-1 manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    styles = ["icon", "hand drawing", "cel painting", "cartoon"]
    entries = []
    for i in range(n):
        rel = f"images/sprite_{i:03d}.png"
        (out_dir / rel).write_bytes(encode_image(_sprite(i, size)))
        entries.append(
            {
                "id": f"sprite_{i:03d}",
                "path": rel,
                "style": styles[i % len(styles)],
                "license": "CC0 (procedural)",
            }
        )
    manifest = {"schema": MANIFEST_SCHEMA, "name": "procedural-flat", "entries": entries}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest_path
