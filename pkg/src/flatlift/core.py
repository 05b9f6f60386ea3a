"""Shared domain types: images, meshes, captions, and content hashing.

All types are immutable value objects; operations are pure. Images are
row-major uint8 buffers, meshes are indexed triangle lists. PNG is the only
raster interchange format and SHA-256 the only digest.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import MalformedImage, MalformedMesh, UnsupportedFormat


class Channels(Enum):
    GRAY8 = 1
    RGB8 = 3
    RGBA8 = 4


class CaptionSource(Enum):
    BACKEND = "backend"
    USER_PROVIDED = "user_provided"


class ConditionKind(Enum):
    CANNY_EDGE = "canny"
    DEPTH = "depth"


class SelectionMethod(Enum):
    VQA = "vqa"
    HEURISTIC_FALLBACK = "heuristic_fallback"
    USER_OVERRIDE = "user_override"


@dataclass(frozen=True)
class ContentHash:
    """SHA-256 digest with a fixed 64-char lowercase hex rendering."""

    digest: bytes

    def __post_init__(self):
        if len(self.digest) != 32:
            raise ValueError("ContentHash requires a 32-byte digest")

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex

    @classmethod
    def from_hex(cls, s: str) -> "ContentHash":
        return cls(bytes.fromhex(s))


def content_hash(data: bytes) -> ContentHash:
    """SHA-256 of the exact byte sequence."""
    return ContentHash(hashlib.sha256(bytes(data)).digest())


@dataclass(frozen=True)
class RasterImage:
    """Row-major 8-bit pixel grid.

    ``data`` holds exactly width*height*channel_count bytes. Use
    :meth:`pixels` for a numpy view shaped (height, width, channels).
    """

    width: int
    height: int
    channels: Channels
    data: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        expected = self.width * self.height * self.channels.value
        if len(self.data) != expected:
            raise ValueError(
                f"data length {len(self.data)} != {expected} "
                f"({self.width}x{self.height}x{self.channels.value})"
            )

    def pixels(self) -> np.ndarray:
        """Read-only (H, W, C) uint8 view."""
        arr = np.frombuffer(self.data, dtype=np.uint8).reshape(
            self.height, self.width, self.channels.value
        )
        arr.flags.writeable = False
        return arr

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        """Build from a (H, W) or (H, W, C) uint8 array."""
        a = np.asarray(arr)
        if a.dtype != np.uint8:
            raise ValueError("array must be uint8")
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3, 4):
            raise ValueError("array must be (H, W) or (H, W, {1,3,4})")
        h, w, c = a.shape
        return cls(w, h, Channels(c), np.ascontiguousarray(a).tobytes())

    def luminance(self) -> np.ndarray:
        """Rec.601 luma as float64 (H, W); alpha ignored."""
        px = self.pixels().astype(np.float64)
        if self.channels is Channels.GRAY8:
            return px[:, :, 0]
        return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]


@dataclass(frozen=True)
class ConditionMap:
    """Single-channel structural guide derived from a source image."""

    kind: ConditionKind
    map: RasterImage
    source_hash: ContentHash

    def __post_init__(self):
        if self.map.channels is not Channels.GRAY8:
            raise ValueError("condition maps must be Gray8")
        if self.kind is ConditionKind.CANNY_EDGE:
            vals = np.unique(self.map.pixels())
            if not np.all(np.isin(vals, (0, 255))):
                raise ValueError("canny maps must be binary {0,255}")


@dataclass(frozen=True)
class Caption:
    text: str
    source: CaptionSource

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("caption must be non-empty after trimming")


@dataclass(frozen=True)
class CandidateImage:
    image: RasterImage
    condition_kind: ConditionKind
    condition_index: int
    backend_id: str
    seed: int

    def __post_init__(self):
        if self.condition_index < 0:
            raise ValueError("condition_index must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in u64")


@dataclass(frozen=True)
class ProxyImage:
    image: RasterImage
    chosen_index: int  # 1-based among candidates
    method: SelectionMethod
    rationale: str

    def __post_init__(self):
        if self.chosen_index < 1:
            raise ValueError("chosen_index is 1-based")


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh, optionally with per-vertex Rgb8 colors."""

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    vertex_colors: Optional[np.ndarray] = None  # (V, 3) uint8

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MalformedMesh("vertices must be (V, 3)")
        if t.size and (t.ndim != 2 or t.shape[1] != 3):
            raise MalformedMesh("triangles must be (T, 3)")
        t = t.reshape(-1, 3)
        if not np.isfinite(v).all():
            raise MalformedMesh("vertex coordinates must be finite")
        if t.size:
            if t.min() < 0 or t.max() >= len(v):
                raise MalformedMesh("triangle index out of range")
            if (
                (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
            ).any():
                raise MalformedMesh("triangle repeats a vertex index")
        c = self.vertex_colors
        if c is not None:
            c = np.ascontiguousarray(np.asarray(c, dtype=np.uint8))
            if c.shape != (len(v), 3):
                raise MalformedMesh("vertex_colors must be (V, 3) uint8")
            c.flags.writeable = False
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "vertex_colors", c)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)


_PIL_MODES = {"L": Channels.GRAY8, "RGB": Channels.RGB8, "RGBA": Channels.RGBA8}


def decode_image(data: bytes) -> RasterImage:
    """Decode an 8-bit PNG (gray, RGB, or RGBA) losslessly."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise MalformedImage(str(e)) from e
    if img.format != "PNG":
        raise UnsupportedFormat(f"expected PNG, got {img.format}")
    mode = img.mode
    if mode == "P":
        # palette PNGs promote to RGB/RGBA depending on transparency
        img = img.convert("RGBA" if "transparency" in img.info else "RGB")
        mode = img.mode
    elif mode == "LA":
        img = img.convert("RGBA")
        mode = "RGBA"
    elif mode == "1":
        img = img.convert("L")
        mode = "L"
    if mode not in _PIL_MODES:
        raise UnsupportedFormat(f"unsupported PNG mode {mode}")
    arr = np.asarray(img, dtype=np.uint8)
    return RasterImage.from_array(arr)


def encode_image(img: RasterImage) -> bytes:
    """Deterministic PNG bytes (fixed zlib settings, no ancillary chunks)."""
    arr = img.pixels()
    mode = {Channels.GRAY8: "L", Channels.RGB8: "RGB", Channels.RGBA8: "RGBA"}[
        img.channels
    ]
    pil = Image.fromarray(arr[:, :, 0] if img.channels is Channels.GRAY8 else arr, mode)
    buf = io.BytesIO()
    # compress_level pinned so identical pixels always yield identical bytes
    pil.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()
