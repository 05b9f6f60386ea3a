"""Inflate a silhouette into a cushion mesh and bake the image onto it.

Shows the thinness diagnostic on the way: the flat slab you would get from
a naive extrusion versus the inflated cushion.

Run: python3 demos/02_inflate_and_bake.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from flatlift import (
    RasterImage,
    bake_frontal,
    foreground_mask,
    inflate_silhouette,
    save_mesh,
    thinness_report,
)


def make_sprite(size=96):
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    canvas = np.full((size, size, 3), 255, dtype=np.uint8)
    heart = ((xx - c) / 28) ** 2 + ((yy - c) / 36) ** 2 <= 1.0
    canvas[heart] = (60, 130, 220)
    stripe = heart & (np.abs(yy - c) < 6)
    canvas[stripe] = (240, 200, 40)
    return RasterImage.from_array(canvas)


def main(out_dir="demo_out/mesh"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    img = make_sprite()
    mask = foreground_mask(img)

    mesh = inflate_silhouette(mask)
    rep = thinness_report(mesh)
    e1, e2, e3 = rep.principal_extents
    print(f"principal extents: {e1:.3f} {e2:.3f} {e3:.3f}")
    print(f"thinness ratio: {rep.thinness_ratio:.3f} "
          f"({'THIN' if rep.flagged_thin else 'OK'})")

    baked = bake_frontal(mesh, img, mask)
    (out / "cushion.ply").write_bytes(save_mesh(baked, "ply"))
    (out / "cushion.obj").write_bytes(save_mesh(baked, "obj"))
    print(f"wrote colored cushion.ply and cushion.obj to {out} "
          f"({len(baked.vertices)} vertices, {len(baked.triangles)} triangles)")


if __name__ == "__main__":
    main(*sys.argv[1:])
