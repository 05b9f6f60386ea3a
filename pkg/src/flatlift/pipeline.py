"""End-to-end orchestration: a resumable, content-addressed-cached stage
machine producing a textured mesh plus a full audit manifest.

Stage order is fixed: mask, flatness, conditions, caption, candidates,
select, shape, bake. Every stage's outputs are cached under a key derived
from the stage name, its input hashes, and the relevant config subset, so
an identical second run touches no backend at all.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import mesh as meshkit
from .backends import BackendEndpoint, BackendRole, BackendSet
from .conditions import (
    CannyParams,
    FlatnessReport,
    ForegroundMask,
    canny_edges,
    estimate_depth_fallback,
    flatness_report,
    foreground_mask,
    normalize_depth,
)
from .core import (
    CandidateImage,
    Caption,
    CaptionSource,
    Channels,
    ConditionKind,
    ConditionMap,
    ContentHash,
    ProxyImage,
    RasterImage,
    SelectionMethod,
    content_hash,
    decode_image,
    encode_image,
)
from .errors import (
    CacheIo,
    ManifestCorrupt,
    RunMismatch,
    StageError,
)
from .mesh import BakeParams, InflateParams, MeshFormat, ThinnessReport
from .select import select_proxy

MAX_WORKING_RESOLUTION = 1024
STAGE_ORDER = [
    "mask",
    "flatness",
    "conditions",
    "caption",
    "candidates",
    "select",
    "shape",
    "bake",
]
MANIFEST_SCHEMA = 1
CACHE_DIR_ENV_VAR = "FLATLIFT_CACHE_DIR"
SILHOUETTE_IOU_WARNING = 0.8


@dataclass(frozen=True)
class PipelineConfig:
    n_canny: int = 2
    n_depth: int = 2
    seed: int = 0
    canny: CannyParams = field(default_factory=CannyParams)
    inflate: InflateParams = field(default_factory=InflateParams)
    bake: BakeParams = field(default_factory=BakeParams)
    endpoints: Dict[str, BackendEndpoint] = field(default_factory=dict)
    cache_dir: Optional[str] = None
    single_condition_mode: bool = False
    depth_invert: bool = False

    def __post_init__(self):
        if self.n_canny < 0 or self.n_depth < 0:
            raise ValueError("condition counts must be >= 0")
        if self.effective_counts() == (0, 0):
            raise ValueError("at least one condition required")

    def effective_counts(self):
        if self.single_condition_mode:
            return 1, 0
        return self.n_canny, self.n_depth

    def serialize(self) -> dict:
        """Stable dict for hashing; cache_dir excluded (relocatable runs)."""
        nc, nd = self.effective_counts()
        return {
            "n_canny": nc,
            "n_depth": nd,
            "seed": self.seed,
            "canny": dataclasses.asdict(self.canny),
            "inflate": dataclasses.asdict(self.inflate),
            "bake": dataclasses.asdict(self.bake),
            "endpoints": {
                role: ep.base_url for role, ep in sorted(self.endpoints.items())
            },
            "single_condition_mode": self.single_condition_mode,
            "depth_invert": self.depth_invert,
        }


@dataclass
class StageRecord:
    name: str
    input_hashes: List[str]
    output_hashes: List[str]
    started: float
    finished: float
    cache_hit: bool


@dataclass
class RunManifest:
    run_id: str
    stages: List[StageRecord] = field(default_factory=list)
    backend_calls: List[dict] = field(default_factory=list)
    selection: Optional[dict] = None
    diagnostics: dict = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "run_id": self.run_id,
            "config": self.config,
            "stages": [dataclasses.asdict(s) for s in self.stages],
            "backend_calls": self.backend_calls,
            "selection": self.selection,
            "diagnostics": self.diagnostics,
            "warnings": self.warnings,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunManifest":
        if data.get("schema") != MANIFEST_SCHEMA:
            raise ManifestCorrupt(f"unsupported manifest schema {data.get('schema')}")
        m = cls(run_id=data["run_id"], config=data.get("config", {}))
        m.stages = [StageRecord(**s) for s in data.get("stages", [])]
        m.backend_calls = data.get("backend_calls", [])
        m.selection = data.get("selection")
        m.diagnostics = data.get("diagnostics", {})
        m.warnings = data.get("warnings", [])
        return m


# --------------------------------------------------------------------------
# Content-addressed cache


class Cache:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: ContentHash) -> Path:
        return self.root / key.hex

    def get(self, key: ContentHash) -> Optional[bytes]:
        p = self._path(key)
        try:
            return p.read_bytes() if p.exists() else None
        except OSError as e:
            raise CacheIo(str(e)) from e

    def put(self, key: ContentHash, data: bytes) -> None:
        p = self._path(key)
        tmp = p.with_suffix(".tmp." + str(os.getpid()))
        try:
            tmp.write_bytes(data)
            os.replace(tmp, p)
        except OSError as e:
            raise CacheIo(str(e)) from e


def _bundle_encode(files: Dict[str, bytes]) -> bytes:
    return json.dumps(
        {k: base64.b64encode(v).decode("ascii") for k, v in sorted(files.items())}
    ).encode("utf-8")


def _bundle_decode(data: bytes) -> Dict[str, bytes]:
    return {k: base64.b64decode(v) for k, v in json.loads(data.decode("utf-8")).items()}


def stage_cache_key(stage: str, input_hashes: List[str], config_subset: dict) -> ContentHash:
    payload = json.dumps(
        {"stage": stage, "inputs": input_hashes, "config": config_subset},
        sort_keys=True,
        separators=(",", ":"),
    )
    return content_hash(payload.encode("utf-8"))


# --------------------------------------------------------------------------
# Pipeline


def compute_run_id(input_bytes: bytes, cfg: PipelineConfig) -> ContentHash:
    cfg_json = json.dumps(cfg.serialize(), sort_keys=True, separators=(",", ":"))
    return content_hash(input_bytes + b"\n" + cfg_json.encode("utf-8"))


def _downscale_to_working(img: RasterImage) -> RasterImage:
    """Clamp the long side to MAX_WORKING_RESOLUTION via area averaging."""
    long_side = max(img.width, img.height)
    if long_side <= MAX_WORKING_RESOLUTION:
        return img
    from PIL import Image

    scale = MAX_WORKING_RESOLUTION / long_side
    w = max(1, round(img.width * scale))
    h = max(1, round(img.height * scale))
    mode = {Channels.GRAY8: "L", Channels.RGB8: "RGB", Channels.RGBA8: "RGBA"}[img.channels]
    arr = img.pixels()
    pil = Image.fromarray(arr[:, :, 0] if img.channels is Channels.GRAY8 else arr, mode)
    out = pil.resize((w, h), Image.BOX)
    return RasterImage.from_array(np.asarray(out, dtype=np.uint8))


class PipelineRun:
    """Single-input pipeline execution bound to a run directory.

    Drives the eight stages in order; ``run()`` executes all of them, while
    the service can step to the candidates stage, pause, then finish with a
    user override.
    """

    def __init__(
        self,
        input_bytes: bytes,
        cfg: PipelineConfig,
        out_dir,
        backend_set: Optional[BackendSet] = None,
    ):
        self.input_bytes = bytes(input_bytes)
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        cache_dir = os.environ.get(CACHE_DIR_ENV_VAR) or cfg.cache_dir
        if cache_dir is None:
            cache_dir = self.out_dir / ".cache"
        self.cache = Cache(cache_dir)
        self.backends = backend_set or BackendSet.from_endpoints(cfg.endpoints)
        self.run_id = compute_run_id(self.input_bytes, cfg)
        self.manifest = RunManifest(run_id=self.run_id.hex, config=cfg.serialize())

        self.input_image = _downscale_to_working(decode_image(self.input_bytes))
        self.mask: Optional[ForegroundMask] = None
        self.flatness: Optional[FlatnessReport] = None
        self.conditions: List[ConditionMap] = []
        self.caption: Optional[Caption] = None
        self.candidates: List[CandidateImage] = []
        self.proxy: Optional[ProxyImage] = None
        self.shape: Optional[meshkit.TriMesh] = None
        self.final: Optional[meshkit.TriMesh] = None

    # -- helpers

    def _write(self, rel: str, data: bytes) -> str:
        path = self.out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        return content_hash(data).hex

    def _write_manifest(self) -> None:
        data = json.dumps(self.manifest.to_json(), indent=1, sort_keys=True).encode()
        path = self.out_dir / "manifest.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    def _run_stage(
        self,
        name: str,
        input_hashes: List[str],
        config_subset: dict,
        compute: Callable[[], Dict[str, bytes]],
    ) -> Dict[str, bytes]:
        """Cache-aware stage execution; outputs land in the run directory."""
        started = time.time()
        key = stage_cache_key(name, input_hashes, config_subset)
        cached = self.cache.get(key)
        if cached is not None:
            files = _bundle_decode(cached)
            cache_hit = True
        else:
            try:
                files = compute()
            except Exception as e:
                self._write_manifest()
                raise StageError(name, e) from e
            self.cache.put(key, _bundle_encode(files))
            cache_hit = False
        out_hashes = [self._write(rel, data) for rel, data in sorted(files.items())]
        self.manifest.stages.append(
            StageRecord(name, input_hashes, out_hashes, started, time.time(), cache_hit)
        )
        self._sync_backend_calls()
        self._write_manifest()
        return files

    def _sync_backend_calls(self) -> None:
        self.manifest.backend_calls = [
            dataclasses.asdict(r) for r in self.backends.records
        ]

    @property
    def _input_hash(self) -> str:
        return content_hash(encode_image(self.input_image)).hex

    # -- stages

    def stage_mask(self) -> None:
        self._write("input.png", self.input_bytes)
        files = self._run_stage(
            "mask",
            [self._input_hash],
            {},
            lambda: {"mask.png": encode_image(foreground_mask(self.input_image).mask)},
        )
        mask_img = decode_image(files["mask.png"])
        fg = mask_img.pixels()[:, :, 0] >= 128
        self.mask = ForegroundMask(mask_img, float(fg.sum()) / fg.size)

    def stage_flatness(self) -> None:
        def compute():
            rep = flatness_report(self.input_image, self.mask)
            return {"flatness.json": json.dumps(dataclasses.asdict(rep)).encode()}

        files = self._run_stage(
            "flatness",
            [self._input_hash, content_hash(encode_image(self.mask.mask)).hex],
            {},
            compute,
        )
        self.flatness = FlatnessReport(**json.loads(files["flatness.json"]))
        self.manifest.diagnostics["flatness"] = dataclasses.asdict(self.flatness)
        self._write_manifest()

    def _condition_specs(self):
        nc, nd = self.cfg.effective_counts()
        specs = []
        for i in range(nc):
            # spread blur scales so multiple canny conditions differ
            sigma = self.cfg.canny.gaussian_sigma * (1.0 + 0.5 * i)
            specs.append((ConditionKind.CANNY_EDGE, i, {"sigma": sigma}))
        for i in range(nd):
            invert = self.cfg.depth_invert ^ (i % 2 == 1)
            specs.append((ConditionKind.DEPTH, i, {"invert": invert}))
        return specs

    def stage_conditions(self) -> None:
        specs = self._condition_specs()

        def compute():
            out = {}
            for kind, i, extra in specs:
                if kind is ConditionKind.CANNY_EDGE:
                    params = dataclasses.replace(
                        self.cfg.canny, gaussian_sigma=extra["sigma"]
                    )
                    cond = canny_edges(self.input_image, params)
                    out[f"conditions/canny_{i}.png"] = encode_image(cond.map)
                else:
                    raw = estimate_depth_fallback(self.mask)
                    cond = normalize_depth(raw, self.mask, invert=extra["invert"])
                    out[f"conditions/depth_{i}.png"] = encode_image(cond.map)
            return out

        files = self._run_stage(
            "conditions",
            [self._input_hash, content_hash(encode_image(self.mask.mask)).hex],
            {"specs": [(k.value, i, e) for k, i, e in specs]},
            compute,
        )
        src = content_hash(encode_image(self.input_image))
        self.conditions = []
        for kind, i, _ in specs:
            name = f"conditions/{'canny' if kind is ConditionKind.CANNY_EDGE else 'depth'}_{i}.png"
            self.conditions.append(ConditionMap(kind, decode_image(files[name]), src))

    def stage_caption(self) -> None:
        def compute():
            try:
                cap = self.backends.caption_image(self.input_image)
            except Exception:
                # captioning is non-essential: degrade to the fallback text
                from .backends import FALLBACK_CAPTION

                cap = Caption(FALLBACK_CAPTION, CaptionSource.BACKEND)
                self.manifest.warnings.append("caption backend failed; using fallback")
            return {
                "caption.json": json.dumps(
                    {"text": cap.text, "source": cap.source.value}
                ).encode()
            }

        files = self._run_stage("caption", [self._input_hash], {}, compute)
        data = json.loads(files["caption.json"])
        self.caption = Caption(data["text"], CaptionSource(data["source"]))

    def stage_candidates(self) -> None:
        specs = self._condition_specs()
        cond_hashes = [content_hash(encode_image(c.map)).hex for c in self.conditions]

        def compute():
            out = {}
            meta = []
            for overall, (cond, (kind, ci, _)) in enumerate(zip(self.conditions, specs)):
                cand = self.backends.generate_candidate(
                    self.input_image, cond, self.caption, self.cfg.seed + overall, ci
                )
                out[f"candidates/cand_{overall}.png"] = encode_image(cand.image)
                meta.append(
                    {
                        "condition_kind": kind.value,
                        "condition_index": ci,
                        "backend_id": cand.backend_id,
                        "seed": cand.seed,
                    }
                )
            out["candidates/meta.json"] = json.dumps(meta).encode()
            return out

        files = self._run_stage(
            "candidates",
            [self._input_hash] + cond_hashes,
            {"seed": self.cfg.seed, "caption": self.caption.text},
            compute,
        )
        meta = json.loads(files["candidates/meta.json"])
        self.candidates = [
            CandidateImage(
                decode_image(files[f"candidates/cand_{i}.png"]),
                ConditionKind(m["condition_kind"]),
                m["condition_index"],
                m["backend_id"],
                m["seed"],
            )
            for i, m in enumerate(meta)
        ]

    def stage_select(self, override: Optional[int] = None) -> None:
        cand_hashes = [content_hash(encode_image(c.image)).hex for c in self.candidates]

        def compute():
            proxy = select_proxy(
                self.candidates, self.backends.ask_vqa, self.mask, override
            )
            return {
                "proxy.png": encode_image(proxy.image),
                "selection.json": json.dumps(
                    {
                        "chosen_index": proxy.chosen_index,
                        "method": proxy.method.value,
                        "rationale": proxy.rationale,
                    }
                ).encode(),
            }

        files = self._run_stage(
            "select", cand_hashes, {"override": override}, compute
        )
        sel = json.loads(files["selection.json"])
        self.proxy = ProxyImage(
            decode_image(files["proxy.png"]),
            sel["chosen_index"],
            SelectionMethod(sel["method"]),
            sel["rationale"],
        )
        self.manifest.selection = sel
        self._write_manifest()

    def stage_shape(self) -> None:
        proxy_hash = content_hash(encode_image(self.proxy.image)).hex

        def compute():
            mesh = self.backends.shape_from_image(self.proxy.image, self.cfg.seed)
            baseline = self.backends.shape_from_image(self.input_image, self.cfg.seed)
            baseline_rep = meshkit.thinness_report(baseline)
            return {
                "shape.ply": meshkit.save_mesh(mesh, MeshFormat.PLY_BINARY),
                "baseline_thinness.json": json.dumps(
                    dataclasses.asdict(baseline_rep)
                ).encode(),
            }

        files = self._run_stage(
            "shape",
            [proxy_hash, self._input_hash],
            {"seed": self.cfg.seed, "inflate": dataclasses.asdict(self.cfg.inflate)},
            compute,
        )
        self.shape = meshkit.load_mesh(files["shape.ply"])
        self.manifest.diagnostics["baseline_thinness"] = json.loads(
            files["baseline_thinness.json"]
        )
        self._write_manifest()

    def stage_bake(self) -> None:
        shape_hash = content_hash(meshkit.save_mesh(self.shape)).hex

        def compute():
            # texture always follows the ORIGINAL input, never the proxy
            final = self.backends.texture_mesh(self.shape, self.input_image, self.mask)
            return {"final.ply": meshkit.save_mesh(final, MeshFormat.PLY_BINARY)}

        iou = self._proxy_silhouette_iou()
        if iou is not None and iou < SILHOUETTE_IOU_WARNING:
            self.manifest.warnings.append(
                f"proxy/input silhouette IoU {iou:.3f} < {SILHOUETTE_IOU_WARNING}"
            )
        files = self._run_stage(
            "bake",
            [shape_hash, self._input_hash],
            {"bake": dataclasses.asdict(self.cfg.bake)},
            compute,
        )
        self.final = meshkit.load_mesh(files["final.ply"])
        self.manifest.diagnostics["final_thinness"] = dataclasses.asdict(
            meshkit.thinness_report(self.final)
        )
        self._write_manifest()

    def _proxy_silhouette_iou(self) -> Optional[float]:
        try:
            proxy_fg = foreground_mask(self.proxy.image).bool_array()
        except Exception:
            return None
        input_fg = self.mask.bool_array()
        union = (proxy_fg | input_fg).sum()
        if union == 0:
            return None
        return float((proxy_fg & input_fg).sum()) / float(union)

    # -- drivers

    def run_until_candidates(self) -> None:
        self.stage_mask()
        self.stage_flatness()
        self.stage_conditions()
        self.stage_caption()
        self.stage_candidates()

    def finish(self, override: Optional[int] = None) -> RunManifest:
        self.stage_select(override)
        self.stage_shape()
        self.stage_bake()
        self._write_manifest()
        return self.manifest

    def run(self, override: Optional[int] = None) -> RunManifest:
        self.run_until_candidates()
        return self.finish(override)


def run_pipeline(
    input_bytes: bytes,
    cfg: PipelineConfig,
    out_dir,
    override_index: Optional[int] = None,
    backend_set: Optional[BackendSet] = None,
) -> RunManifest:
    run = PipelineRun(input_bytes, cfg, out_dir, backend_set)
    return run.run(override_index)


def resume(
    run_dir,
    cfg: PipelineConfig,
    backend_set: Optional[BackendSet] = None,
) -> RunManifest:
    """Re-drive a partial run; completed stages replay from cache."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    input_path = run_dir / "input.png"
    if not manifest_path.exists() or not input_path.exists():
        raise ManifestCorrupt(f"{run_dir} does not contain a partial run")
    try:
        previous = RunManifest.from_json(json.loads(manifest_path.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ManifestCorrupt(str(e)) from e
    input_bytes = input_path.read_bytes()
    expected = compute_run_id(input_bytes, cfg)
    if previous.run_id != expected.hex:
        raise RunMismatch(
            f"config/input hash {expected.hex} does not match run {previous.run_id}"
        )
    run = PipelineRun(input_bytes, cfg, run_dir, backend_set)
    return run.run()
