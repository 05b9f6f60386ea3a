"""Operator command line covering every pipeline stage.

Exit codes: 0 success, 1 usage/config error, 2 stage failure.
"""

from __future__ import annotations

import dataclasses
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional

import click

from .backends import BackendEndpoint, BackendRole
from .bench import load_manifest, run_benchmark, write_report
from .conditions import (
    CannyParams,
    canny_edges,
    estimate_depth_fallback,
    foreground_mask,
    normalize_depth,
)
from .core import decode_image, encode_image
from .errors import FlatliftError, StageError
from .mesh import BakeParams, InflateParams, load_mesh, thinness_report
from .pipeline import PipelineConfig, run_pipeline
from .select import select_proxy


def load_config_file(path) -> PipelineConfig:
    """TOML config with sections mirroring PipelineConfig fields."""
    with open(path, "rb") as f:
        data = tomllib.load(f)
    kwargs = {}
    pipeline = data.get("pipeline", {})
    for key in ("n_canny", "n_depth", "seed", "single_condition_mode", "depth_invert", "cache_dir"):
        if key in pipeline:
            kwargs[key] = pipeline[key]
    if "canny" in data:
        kwargs["canny"] = CannyParams(**data["canny"])
    if "inflate" in data:
        kwargs["inflate"] = InflateParams(**data["inflate"])
    if "bake" in data:
        kwargs["bake"] = BakeParams(**data["bake"])
    endpoints = {}
    for role, section in data.get("endpoints", {}).items():
        endpoints[role] = BackendEndpoint(
            base_url=section["base_url"],
            role=BackendRole(role),
            auth_token=section.get("auth_token"),
            timeout=section.get("timeout", 120.0),
            max_retries=section.get("max_retries", 2),
        )
    if endpoints:
        kwargs["endpoints"] = endpoints
    return PipelineConfig(**kwargs)


@click.group()
def cli():
    """Lift flat-colored images into textured 3D meshes."""


def _build_config(config, n_canny, n_depth, seed, single_condition) -> PipelineConfig:
    try:
        if config:
            cfg = load_config_file(config)
            overrides = {}
            if n_canny is not None:
                overrides["n_canny"] = n_canny
            if n_depth is not None:
                overrides["n_depth"] = n_depth
            if seed is not None:
                overrides["seed"] = seed
            if single_condition:
                overrides["single_condition_mode"] = True
            return dataclasses.replace(cfg, **overrides) if overrides else cfg
        return PipelineConfig(
            n_canny=n_canny if n_canny is not None else 2,
            n_depth=n_depth if n_depth is not None else 2,
            seed=seed if seed is not None else 0,
            single_condition_mode=single_condition,
        )
    except (ValueError, TypeError, KeyError) as e:
        raise click.UsageError(str(e))


@cli.command("run")
@click.argument("input_png", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default="run_out", show_default=True)
@click.option("--n-canny", type=int, default=None)
@click.option("--n-depth", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--single-condition", is_flag=True, help="one canny condition only")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--override-index", type=int, default=None)
def run_cmd(input_png, out_dir, n_canny, n_depth, seed, single_condition, config, override_index):
    """Run the full pipeline on INPUT_PNG."""
    cfg = _build_config(config, n_canny, n_depth, seed, single_condition)
    manifest = run_pipeline(
        Path(input_png).read_bytes(), cfg, out_dir, override_index
    )
    sel = manifest.selection or {}
    click.echo(f"run_id {manifest.run_id}")
    click.echo(f"chosen_index {sel.get('chosen_index')} ({sel.get('method')})")
    final = manifest.diagnostics.get("final_thinness", {})
    click.echo(f"final thinness_ratio {final.get('thinness_ratio', 0.0):.4f}")
    click.echo(f"artifacts in {out_dir}")


@cli.command("conditions")
@click.argument("input_png", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default="conditions_out", show_default=True)
def conditions_cmd(input_png, out_dir):
    """Extract the foreground mask, canny edge, and depth conditions."""
    img = decode_image(Path(input_png).read_bytes())
    mask = foreground_mask(img)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mask.png").write_bytes(encode_image(mask.mask))
    canny = canny_edges(img)
    (out / "canny_0.png").write_bytes(encode_image(canny.map))
    if mask.coverage > 0:
        depth = normalize_depth(estimate_depth_fallback(mask), mask)
        (out / "depth_0.png").write_bytes(encode_image(depth.map))
    click.echo(f"mask coverage {mask.coverage:.3f}; conditions in {out}")


@cli.command("select")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--override-index", type=int, default=None)
def select_cmd(run_dir, override_index):
    """Re-run selection over the candidates of an existing run directory."""
    run_dir = Path(run_dir)
    from .backends import BackendSet
    from .core import CandidateImage, ConditionKind

    meta_path = run_dir / "candidates" / "meta.json"
    if not meta_path.exists():
        raise click.UsageError(f"{run_dir} has no candidates stage output")
    meta = json.loads(meta_path.read_text())
    candidates = [
        CandidateImage(
            decode_image((run_dir / "candidates" / f"cand_{i}.png").read_bytes()),
            ConditionKind(m["condition_kind"]),
            m["condition_index"],
            m["backend_id"],
            m["seed"],
        )
        for i, m in enumerate(meta)
    ]
    input_img = decode_image((run_dir / "input.png").read_bytes())
    from .pipeline import _downscale_to_working

    mask = foreground_mask(_downscale_to_working(input_img))
    proxy = select_proxy(candidates, BackendSet().ask_vqa, mask, override_index)
    click.echo(f"chosen_index {proxy.chosen_index} ({proxy.method.value})")
    click.echo(proxy.rationale)


@cli.command("diagnose")
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
def diagnose_cmd(mesh_path):
    """Print the thinness diagnostic for a PLY/OBJ mesh."""
    mesh = load_mesh(Path(mesh_path).read_bytes())
    rep = thinness_report(mesh)
    e1, e2, e3 = rep.principal_extents
    click.echo(f"principal_extents {e1:.4f} {e2:.4f} {e3:.4f}")
    click.echo(f"thinness_ratio {rep.thinness_ratio:.4f}")
    click.echo("THIN" if rep.flagged_thin else "OK")


@cli.command("bench")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--limit", type=int, default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--work-dir", default="bench_runs", show_default=True)
def bench_cmd(manifest_path, limit, fmt, out_path, work_dir):
    """Run the benchmark harness over a dataset manifest."""
    manifest = load_manifest(manifest_path)
    report = run_benchmark(manifest, PipelineConfig(), work_dir, limit)
    data = write_report(report, fmt)
    if out_path:
        Path(out_path).write_bytes(data)
        click.echo(f"report written to {out_path}")
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.write(b"\n")


@cli.command("serve")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--runs-dir", default="service_runs", show_default=True)
def serve_cmd(port, host, runs_dir):
    """Start the HTTP job service."""
    from .service import serve

    serve(runs_dir, port=port, host=host)


def main(argv: Optional[list] = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as e:
        e.show(file=sys.stderr)
        return 1
    except click.Abort:
        return 1
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FlatliftError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
