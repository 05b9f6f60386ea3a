"""Model-backend orchestration.

Five roles (caption, generate, vqa, shape, texture) share one wire
contract: HTTP POST with JSON bodies and base64 PNG/PLY payloads at
/v1/{role}. Every role also has a deterministic builtin fallback so the
whole pipeline runs offline, plus a fixture-replay backend keyed by the
request hash for record/replay tests.
"""

from __future__ import annotations

import base64
import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import mesh as meshkit
from .conditions import ForegroundMask, foreground_mask
from .core import (
    CandidateImage,
    Caption,
    CaptionSource,
    Channels,
    ConditionKind,
    ConditionMap,
    ContentHash,
    RasterImage,
    TriMesh,
    content_hash,
    decode_image,
    encode_image,
)
from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    MalformedMesh,
    MalformedResponse,
)
from .select import realism_score

FALLBACK_CAPTION = "a flat-colored illustration"
TOKEN_ENV_VAR = "FLATLIFT_BACKEND_TOKEN"


class BackendRole(Enum):
    CAPTION = "caption"
    GENERATE = "generate"
    VQA = "vqa"
    SHAPE = "shape"
    TEXTURE = "texture"


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    role: BackendRole
    auth_token: Optional[str] = None
    timeout: float = 120.0
    max_retries: int = 2

    def __post_init__(self):
        if not (self.base_url.startswith("http://") or self.base_url.startswith("https://")):
            raise ValueError(f"base_url does not parse: {self.base_url!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class BackendCallRecord:
    role: str
    request_hash: str
    response_hash: str
    latency_ms: float
    attempts: int
    backend_id: str


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(s: str) -> bytes:
    try:
        return base64.b64decode(s, validate=True)
    except Exception as e:
        raise MalformedResponse(f"bad base64 payload: {e}") from e


def request_hash(role: BackendRole, body: dict) -> ContentHash:
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return content_hash(f"{role.value}\n{canonical}".encode("utf-8"))


class HttpBackend:
    """JSON-over-HTTP client with fixed exponential backoff retries.

    ``transport`` is injectable for tests (httpx transport); ``sleep`` too,
    so retry timing stays deterministic under test.
    """

    INITIAL_BACKOFF_S = 0.5

    def __init__(self, endpoint: BackendEndpoint, transport=None, sleep=time.sleep):
        self.endpoint = endpoint
        self._transport = transport
        self._sleep = sleep
        self.backend_id = f"http:{endpoint.base_url}"

    def post(self, body: dict, recorder: Optional[List[BackendCallRecord]] = None) -> dict:
        import httpx

        ep = self.endpoint
        url = ep.base_url.rstrip("/") + f"/v1/{ep.role.value}"
        headers = {}
        token = os.environ.get(TOKEN_ENV_VAR, ep.auth_token)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        req_hash = request_hash(ep.role, body)
        started = time.monotonic()
        attempts = 0
        backoff = self.INITIAL_BACKOFF_S
        last_error = None
        resp_payload = None
        for attempt in range(ep.max_retries + 1):
            attempts = attempt + 1
            try:
                with httpx.Client(transport=self._transport, timeout=ep.timeout) as client:
                    resp = client.post(url, json=body, headers=headers)
                if resp.status_code != 200:
                    raise BackendUnavailable(f"HTTP {resp.status_code} from {url}")
                resp_payload = resp.json()
                break
            except MalformedResponse:
                raise
            except Exception as e:
                last_error = e
                if attempt < ep.max_retries:
                    self._sleep(backoff)
                    backoff *= 2.0
        latency = (time.monotonic() - started) * 1000.0
        if resp_payload is None:
            if recorder is not None:
                recorder.append(
                    BackendCallRecord(
                        ep.role.value, req_hash.hex, "", latency, attempts, self.backend_id
                    )
                )
            raise BackendUnavailable(
                f"{ep.role.value} backend failed after {attempts} attempts: {last_error}"
            )
        resp_hash = content_hash(
            json.dumps(resp_payload, sort_keys=True, separators=(",", ":")).encode()
        )
        if recorder is not None:
            recorder.append(
                BackendCallRecord(
                    ep.role.value, req_hash.hex, resp_hash.hex, latency, attempts, self.backend_id
                )
            )
        return resp_payload


class FixtureReplayBackend:
    """Referentially transparent replay: response keyed by request hash."""

    def __init__(self, role: BackendRole, fixtures: Optional[dict] = None):
        self.role = role
        self.fixtures = dict(fixtures or {})
        self.backend_id = "fixture"

    def record(self, body: dict, response: dict) -> str:
        key = request_hash(self.role, body).hex
        self.fixtures[key] = response
        return key

    def post(self, body: dict, recorder: Optional[List[BackendCallRecord]] = None) -> dict:
        key = request_hash(self.role, body).hex
        if key not in self.fixtures:
            raise BackendUnavailable(f"no fixture recorded for {self.role.value} {key}")
        response = self.fixtures[key]
        resp_hash = content_hash(
            json.dumps(response, sort_keys=True, separators=(",", ":")).encode()
        )
        if recorder is not None:
            recorder.append(
                BackendCallRecord(self.role.value, key, resp_hash.hex, 0.0, 1, self.backend_id)
            )
        return response

    @classmethod
    def load(cls, role: BackendRole, path) -> "FixtureReplayBackend":
        with open(path, "r", encoding="utf-8") as f:
            return cls(role, json.load(f))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.fixtures, f, sort_keys=True, indent=1)


# --------------------------------------------------------------------------
# Builtin deterministic implementations


def _shading_overlay_canny(img: RasterImage, cond: ConditionMap, seed: int) -> RasterImage:
    """Synthetic 3D-illusion stand-in for edge conditions.

    Luminance is multiplied by 0.5 + 0.5 * blurred(255 - distance-to-nearest-
    edge, normalized to [0,1]); the seed nudges the blur radius so different
    seeds give visibly different candidates.
    """
    edges = cond.map.pixels()[:, :, 0] >= 128
    px = img.pixels()
    rgb = (
        np.repeat(px, 3, axis=2) if img.channels is Channels.GRAY8 else px[:, :, :3]
    ).astype(np.float64)
    if edges.any():
        dist = ndimage.distance_transform_edt(~edges)
        dmax = float(dist.max())
        fieldv = 255.0 - dist * (255.0 / dmax) if dmax > 0 else np.full(dist.shape, 255.0)
        sigma = 2.0 + float(seed % 4)
        blurred = ndimage.gaussian_filter(fieldv, sigma=sigma, mode="nearest")
        shade = 0.5 + 0.5 * (blurred / 255.0)
    else:
        shade = np.full(edges.shape, 1.0)
    out = np.clip(np.rint(rgb * shade[:, :, None]), 0, 255).astype(np.uint8)
    return RasterImage.from_array(out)


def _shading_overlay_depth(img: RasterImage, cond: ConditionMap) -> RasterImage:
    """Depth-conditioned stand-in: luminance scaled by 0.5 + 0.5*(depth/255)."""
    depth = cond.map.pixels()[:, :, 0].astype(np.float64)
    px = img.pixels()
    rgb = (
        np.repeat(px, 3, axis=2) if img.channels is Channels.GRAY8 else px[:, :, :3]
    ).astype(np.float64)
    shade = 0.5 + 0.5 * (depth / 255.0)
    out = np.clip(np.rint(rgb * shade[:, :, None]), 0, 255).astype(np.uint8)
    return RasterImage.from_array(out)


@dataclass
class BackendSet:
    """Resolved per-role backends; None means use the builtin fallback."""

    caption: Optional[object] = None
    generate: Optional[object] = None
    vqa: Optional[object] = None
    shape: Optional[object] = None
    texture: Optional[object] = None
    records: List[BackendCallRecord] = field(default_factory=list)

    @classmethod
    def from_endpoints(cls, endpoints: dict, transport=None, sleep=time.sleep) -> "BackendSet":
        kwargs = {}
        for role in BackendRole:
            ep = endpoints.get(role.value)
            if ep is not None:
                kwargs[role.value] = HttpBackend(ep, transport=transport, sleep=sleep)
        return cls(**kwargs)

    # -- caption

    def caption_image(self, img: RasterImage) -> Caption:
        if self.caption is None:
            return Caption(FALLBACK_CAPTION, CaptionSource.BACKEND)
        body = {"image_png_b64": _b64(encode_image(img))}
        resp = self.caption.post(body, self.records)
        text = resp.get("caption")
        if not isinstance(text, str) or not text.strip():
            raise MalformedResponse("caption response missing or empty")
        return Caption(text.strip(), CaptionSource.BACKEND)

    # -- generate

    def generate_candidate(
        self,
        img: RasterImage,
        cond: ConditionMap,
        cap: Caption,
        seed: int,
        condition_index: int = 0,
    ) -> CandidateImage:
        if (img.width, img.height) != (cond.map.width, cond.map.height):
            raise DimensionMismatch("image and condition resolutions differ")
        if self.generate is None:
            if cond.kind is ConditionKind.CANNY_EDGE:
                out = _shading_overlay_canny(img, cond, seed)
            else:
                out = _shading_overlay_depth(img, cond)
            backend_id = "builtin"
        else:
            body = {
                "image_png_b64": _b64(encode_image(img)),
                "condition_png_b64": _b64(encode_image(cond.map)),
                "condition_kind": cond.kind.value,
                "prompt": cap.text,
                "seed": seed,
            }
            resp = self.generate.post(body, self.records)
            payload = resp.get("image_png_b64")
            if not isinstance(payload, str):
                raise MalformedResponse("generate response missing image_png_b64")
            out = decode_image(_unb64(payload))
            if (out.width, out.height) != (img.width, img.height):
                raise DimensionMismatch("generated candidate resolution differs")
            backend_id = getattr(self.generate, "backend_id", "remote")
        return CandidateImage(out, cond.kind, condition_index, backend_id, seed)

    # -- vqa

    def ask_vqa(self, question: str, images: Sequence[RasterImage]) -> str:
        if not 1 <= len(images) <= 16:
            raise ValueError("vqa accepts between 1 and 16 images")
        if self.vqa is None:
            scores = []
            for im in images:
                m = foreground_mask(im)
                scores.append(realism_score(im, m).total if m.coverage > 0 else 0.0)
            return str(int(np.argmax(scores)) + 1)
        body = {
            "question": question,
            "images_png_b64": [_b64(encode_image(im)) for im in images],
        }
        resp = self.vqa.post(body, self.records)
        answer = resp.get("answer")
        if not isinstance(answer, str) or not answer.strip():
            raise MalformedResponse("vqa response missing or empty answer")
        return answer

    # -- shape

    def shape_from_image(self, img: RasterImage, seed: int) -> TriMesh:
        if self.shape is None:
            mask = foreground_mask(img)
            return meshkit.inflate_silhouette(mask)
        body = {"image_png_b64": _b64(encode_image(img)), "seed": seed}
        resp = self.shape.post(body, self.records)
        payload = resp.get("mesh_ply_b64")
        if not isinstance(payload, str):
            raise MalformedResponse("shape response missing mesh_ply_b64")
        try:
            return meshkit.load_mesh(_unb64(payload))
        except MalformedMesh:
            raise

    # -- texture

    def texture_mesh(
        self, mesh: TriMesh, img: RasterImage, mask: Optional[ForegroundMask] = None
    ) -> TriMesh:
        if self.texture is None:
            m = mask if mask is not None else foreground_mask(img)
            return meshkit.bake_frontal(mesh, img, m)
        body = {
            "mesh_ply_b64": _b64(meshkit.save_mesh(mesh)),
            "image_png_b64": _b64(encode_image(img)),
        }
        resp = self.texture.post(body, self.records)
        payload = resp.get("mesh_ply_b64")
        if not isinstance(payload, str):
            raise MalformedResponse("texture response missing mesh_ply_b64")
        out = meshkit.load_mesh(_unb64(payload))
        if out.vertex_colors is None:
            raise MalformedMesh("textured mesh is missing vertex colors")
        return out
