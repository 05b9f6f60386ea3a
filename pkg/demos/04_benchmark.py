"""Benchmark the pipeline on a procedural flat-sprite dataset.

Generates a manifest of deterministic sprites, runs a small slice of it,
and prints the aggregate thinness statistics.

Run: python3 demos/04_benchmark.py [out_dir] [limit]
"""

import sys
from pathlib import Path

from flatlift import PipelineConfig
from flatlift.bench import (
    generate_procedural_dataset,
    load_manifest,
    run_benchmark,
    write_report,
)


def main(out_dir="demo_out/bench", limit="5"):
    out = Path(out_dir)
    manifest_path = generate_procedural_dataset(out / "dataset", n=20)
    manifest = load_manifest(manifest_path)
    print(f"dataset: {len(manifest.entries)} sprites at {manifest.root}")

    cfg = PipelineConfig(cache_dir=str(out / ".cache"))
    report = run_benchmark(manifest, cfg, out / "runs", limit=int(limit))
    for key, value in report.aggregates.items():
        print(f"  {key}: {value}")

    (out / "report.json").write_bytes(write_report(report, "json"))
    (out / "report.csv").write_bytes(write_report(report, "csv"))
    print(f"wrote report.json and report.csv to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
