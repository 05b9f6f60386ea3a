"""Extract structural conditions from a flat sprite.

Builds a flat-colored disk, separates it from the canvas, and derives the
two condition maps (canny edges and a distance-transform depth proxy) that
steer candidate generation.

Run: python3 demos/01_conditions.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from flatlift import (
    RasterImage,
    canny_edges,
    encode_image,
    estimate_depth_fallback,
    flatness_report,
    foreground_mask,
    normalize_depth,
)


def make_sprite(size=96, radius=32):
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    canvas = np.full((size, size, 3), 250, dtype=np.uint8)
    canvas[(xx - c) ** 2 + (yy - c) ** 2 <= radius**2] = (220, 90, 40)
    return RasterImage.from_array(canvas)


def main(out_dir="demo_out/conditions"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    img = make_sprite()
    mask = foreground_mask(img)
    print(f"foreground coverage: {mask.coverage:.3f}")

    flat = flatness_report(img, mask)
    print(
        f"flatness: {flat.distinct_color_count} colors, "
        f"{flat.flat_pixel_fraction:.2%} flat pixels -> is_flat={flat.is_flat}"
    )

    edges = canny_edges(img)
    depth = normalize_depth(estimate_depth_fallback(mask), mask)

    (out / "input.png").write_bytes(encode_image(img))
    (out / "mask.png").write_bytes(encode_image(mask.mask))
    (out / "canny.png").write_bytes(encode_image(edges.map))
    (out / "depth.png").write_bytes(encode_image(depth.map))
    print(f"wrote input/mask/canny/depth PNGs to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
