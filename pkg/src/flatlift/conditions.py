"""Structure-condition extraction: canny edges, depth normalization,
foreground masking, and the flat-colored-input heuristic.

The canny implementation follows the classical chain: luma, gaussian blur,
Sobel, direction-quantized non-maximum suppression, Otsu double threshold,
hysteresis via 8-connected components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import (
    Channels,
    ConditionKind,
    ConditionMap,
    ContentHash,
    RasterImage,
    content_hash,
    encode_image,
)
from .errors import DimensionMismatch, EmptyForeground


@dataclass(frozen=True)
class CannyParams:
    gaussian_sigma: float = 1.4
    low_threshold: Optional[float] = None
    high_threshold: Optional[float] = None
    auto_threshold: bool = True

    def __post_init__(self):
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be > 0")
        if self.low_threshold is not None and self.high_threshold is not None:
            if not self.low_threshold < self.high_threshold:
                raise ValueError("low_threshold must be < high_threshold")


@dataclass(frozen=True)
class ForegroundMask:
    mask: RasterImage  # Gray8, values {0,255}
    coverage: float

    def bool_array(self) -> np.ndarray:
        return self.mask.pixels()[:, :, 0] >= 128


@dataclass(frozen=True)
class FlatnessReport:
    distinct_color_count: int
    flat_pixel_fraction: float
    shading_score: float
    is_flat: bool


# flatness heuristic defaults
GRADIENT_TAU = 8.0  # luma units / pixel
MAX_FLAT_COLORS = 32  # distinct 4-bit-quantized colors
MIN_FLAT_FRACTION = 0.85
BACKGROUND_COLOR_TAU = 20.0  # euclidean RGB distance for border flood fill


def _gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _gaussian_blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    k = _gaussian_kernel1d(sigma)
    out = ndimage.convolve1d(gray, k, axis=0, mode="nearest")
    return ndimage.convolve1d(out, k, axis=1, mode="nearest")


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)

# quantized gradient direction -> (dy, dx) offset of the positive-side
# neighbor, in array coordinates (y grows downward)
_DIR_OFFSETS = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


def _quantize_direction(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Map gradient angle to {0: 0deg, 1: 45deg, 2: 90deg, 3: 135deg}."""
    ang = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    q = np.zeros(ang.shape, dtype=np.int8)
    q[(ang >= 22.5) & (ang < 67.5)] = 1
    q[(ang >= 67.5) & (ang < 112.5)] = 2
    q[(ang >= 112.5) & (ang < 157.5)] = 3
    return q


def _non_max_suppress(mag: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Keep pixels strictly greater than the positive-side neighbor and >=
    the negative side, so two adjacent equal maxima never both survive."""
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    keep = np.zeros((h, w), dtype=bool)
    for d, (dy, dx) in _DIR_OFFSETS.items():
        sel = q == d
        pos = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        neg = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep |= sel & (mag > pos) & (mag >= neg)
    return np.where(keep, mag, 0.0)


def _otsu_threshold(values: np.ndarray) -> float:
    """Otsu's method over a 256-bin histogram; returns a value threshold."""
    if values.size == 0:
        return 0.0
    vmax = float(values.max())
    if vmax <= 0:
        return 0.0
    hist, edges = np.histogram(values, bins=256, range=(0.0, vmax))
    p = hist.astype(np.float64) / hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(p)
    w1 = 1.0 - w0
    mu = np.cumsum(p * centers)
    mu_t = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_t * w0 - mu) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def canny_edges(img: RasterImage, params: CannyParams = CannyParams()) -> ConditionMap:
    """Binary edge map; edges are one pixel wide along the gradient."""
    src_hash = content_hash(encode_image(img))
    gray = img.luminance()
    if np.ptp(gray) == 0:
        # degenerate: no gradients anywhere, return an empty map
        empty = np.zeros(gray.shape, dtype=np.uint8)
        return ConditionMap(
            ConditionKind.CANNY_EDGE, RasterImage.from_array(empty), src_hash
        )
    blurred = _gaussian_blur(gray, params.gaussian_sigma)
    gx = ndimage.convolve(blurred, _SOBEL_X, mode="nearest")
    gy = ndimage.convolve(blurred, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)
    q = _quantize_direction(gx, gy)
    suppressed = _non_max_suppress(mag, q)

    if params.auto_threshold and (
        params.low_threshold is None or params.high_threshold is None
    ):
        nonzero = suppressed[suppressed > 0]
        high = _otsu_threshold(nonzero)
        low = 0.4 * high
    else:
        high = float(params.high_threshold if params.high_threshold is not None else 200)
        low = float(params.low_threshold if params.low_threshold is not None else 0.4 * high)

    strong = suppressed >= high
    weak = suppressed >= low
    # hysteresis: keep weak components that contain at least one strong pixel
    structure = np.ones((3, 3), dtype=bool)
    labels, n = ndimage.label(weak, structure=structure)
    if n:
        strong_labels = np.unique(labels[strong])
        strong_labels = strong_labels[strong_labels != 0]
        edges = np.isin(labels, strong_labels)
    else:
        edges = np.zeros_like(weak)
    out = np.where(edges, 255, 0).astype(np.uint8)
    return ConditionMap(ConditionKind.CANNY_EDGE, RasterImage.from_array(out), src_hash)


def normalize_depth(
    raw: RasterImage, mask: ForegroundMask, invert: bool = False
) -> ConditionMap:
    """Affine-rescale foreground depth to [0, 255]; background forced to 0.

    Inversion happens on the raw values before rescaling, so a single-valued
    foreground always maps to 128.
    """
    if raw.channels is not Channels.GRAY8:
        raise ValueError("raw depth must be Gray8")
    if (raw.width, raw.height) != (mask.mask.width, mask.mask.height):
        raise DimensionMismatch("depth and mask dimensions differ")
    src_hash = content_hash(encode_image(raw))
    depth = raw.pixels()[:, :, 0].astype(np.float64)
    fg = mask.bool_array()
    out = np.zeros(depth.shape, dtype=np.uint8)
    if fg.any():
        vals = depth[fg]
        if invert:
            vals = 255.0 - vals
        lo, hi = float(vals.min()), float(vals.max())
        if hi == lo:
            out[fg] = 128
        else:
            out[fg] = np.rint((vals - lo) * 255.0 / (hi - lo)).astype(np.uint8)
    return ConditionMap(ConditionKind.DEPTH, RasterImage.from_array(out), src_hash)


def foreground_mask(img: RasterImage) -> ForegroundMask:
    """Subject/background separation via alpha or border flood fill."""
    px = img.pixels()
    h, w = img.height, img.width
    if img.channels is Channels.RGBA8:
        fg = px[:, :, 3] >= 128
    else:
        rgb = (
            np.repeat(px, 3, axis=2)
            if img.channels is Channels.GRAY8
            else px[:, :, :3]
        ).astype(np.float64)
        corners = [rgb[0, 0], rgb[0, -1], rgb[-1, 0], rgb[-1, -1]]
        # majority corner color, ties broken by first occurrence
        keys = [tuple(c) for c in corners]
        bg = corners[max(range(4), key=lambda i: (keys.count(keys[i]), -i))]
        dist = np.sqrt(((rgb - bg) ** 2).sum(axis=2))
        near_bg = dist <= BACKGROUND_COLOR_TAU
        labels, n = ndimage.label(near_bg)  # 4-connectivity
        border_labels = np.unique(
            np.concatenate(
                [labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]]
            )
        )
        border_labels = border_labels[border_labels != 0]
        background = np.isin(labels, border_labels)
        fg = ~background
    mask_img = RasterImage.from_array(np.where(fg, 255, 0).astype(np.uint8))
    return ForegroundMask(mask_img, float(fg.sum()) / (w * h))


def _quantized_colors(img: RasterImage, fg: np.ndarray) -> np.ndarray:
    px = img.pixels()
    rgb = (
        np.repeat(px, 3, axis=2) if img.channels is Channels.GRAY8 else px[:, :, :3]
    )
    q = rgb[fg] >> 4  # 4 bits per channel
    return q[:, 0].astype(np.int32) * 256 + q[:, 1].astype(np.int32) * 16 + q[:, 2]


def foreground_gradient_magnitude(luma: np.ndarray, fg: np.ndarray) -> np.ndarray:
    """Luma gradient magnitude that never differences across the silhouette.

    Central differences where both axis neighbors are foreground, one-sided
    where only one is, zero where none are; so a constant-color subject has
    zero gradient everywhere inside its mask.
    """
    comps = []
    for axis in (0, 1):
        next_l = np.roll(luma, -1, axis)
        prev_l = np.roll(luma, 1, axis)
        next_f = np.roll(fg, -1, axis)
        prev_f = np.roll(fg, 1, axis)
        if axis == 0:
            next_f[-1, :] = False
            prev_f[0, :] = False
        else:
            next_f[:, -1] = False
            prev_f[:, 0] = False
        g = np.zeros_like(luma)
        both = next_f & prev_f
        g[both] = (next_l[both] - prev_l[both]) / 2.0
        only_next = next_f & ~prev_f
        g[only_next] = next_l[only_next] - luma[only_next]
        only_prev = prev_f & ~next_f
        g[only_prev] = luma[only_prev] - prev_l[only_prev]
        comps.append(g)
    return np.hypot(comps[0], comps[1])


def shading_score(img: RasterImage, fg: np.ndarray) -> float:
    """Mean within-quantized-color-cluster luminance stddev over foreground."""
    if not fg.any():
        raise EmptyForeground("mask has zero coverage")
    codes = _quantized_colors(img, fg)
    luma = img.luminance()[fg]
    order = np.argsort(codes, kind="stable")
    codes_s, luma_s = codes[order], luma[order]
    uniq, starts = np.unique(codes_s, return_index=True)
    # shift by the first element so constant clusters give exactly 0
    stds = [float(np.std(part - part[0])) for part in np.split(luma_s, starts[1:])]
    return float(np.mean(stds))


def flatness_report(img: RasterImage, mask: ForegroundMask) -> FlatnessReport:
    """Classify whether the input reads as a flat-colored illustration."""
    fg = mask.bool_array()
    if not fg.any():
        raise EmptyForeground("mask has zero coverage")
    codes = _quantized_colors(img, fg)
    distinct = int(np.unique(codes).size)
    grad = foreground_gradient_magnitude(img.luminance(), fg)
    flat_fraction = float((grad[fg] < GRADIENT_TAU).sum()) / int(fg.sum())
    score = shading_score(img, fg)
    is_flat = distinct <= MAX_FLAT_COLORS and flat_fraction >= MIN_FLAT_FRACTION
    return FlatnessReport(distinct, flat_fraction, score, is_flat)


def estimate_depth_fallback(mask: ForegroundMask) -> RasterImage:
    """Builtin depth source: normalized euclidean distance transform of the
    foreground, so offline runs get a plausible inflation-style depth."""
    fg = mask.bool_array()
    if not fg.any():
        raise EmptyForeground("mask has zero coverage")
    dist = ndimage.distance_transform_edt(fg)
    dmax = float(dist.max())
    if dmax <= 0:
        depth = np.where(fg, 128, 0).astype(np.uint8)
    else:
        depth = np.rint(dist * (255.0 / dmax)).astype(np.uint8)
    return RasterImage.from_array(depth)
