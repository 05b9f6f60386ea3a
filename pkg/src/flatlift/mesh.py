"""Native geometry kit: mesh I/O, normalization, silhouette inflation,
frontal texture baking, and the thinness diagnostic.

PLY support covers ascii and binary little-endian with float32 x/y/z and
optional uchar red/green/blue per vertex. OBJ keeps only v/f records and
drops colors.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .conditions import ForegroundMask
from .core import Channels, RasterImage, TriMesh
from .errors import DegenerateMesh, EmptyForeground, MalformedMesh


class MeshFormat(Enum):
    PLY_BINARY = "ply_binary"
    PLY_ASCII = "ply_ascii"
    OBJ = "obj"


@dataclass(frozen=True)
class ThinnessReport:
    principal_extents: Tuple[float, float, float]  # e1 >= e2 >= e3
    thinness_ratio: float
    flagged_thin: bool


@dataclass(frozen=True)
class InflateParams:
    grid_step: int = 2
    height_scale: float = 0.9
    mirror_back: bool = True

    def __post_init__(self):
        if self.grid_step < 1:
            raise ValueError("grid_step must be >= 1")
        if self.height_scale <= 0:
            raise ValueError("height_scale must be > 0")


@dataclass(frozen=True)
class BakeParams:
    raster_size: int = 512
    depth_epsilon: float = 1e-3
    hidden_fill: str = "nearest_visible"  # or "mirror_front"

    def __post_init__(self):
        if self.raster_size < 16:
            raise ValueError("raster_size must be >= 16")
        if self.hidden_fill not in ("nearest_visible", "mirror_front"):
            raise ValueError("hidden_fill must be nearest_visible or mirror_front")


THIN_RATIO_THRESHOLD = 0.1


# --------------------------------------------------------------------------
# I/O


def save_mesh(mesh: TriMesh, fmt: MeshFormat = MeshFormat.PLY_BINARY) -> bytes:
    if isinstance(fmt, str):
        fmt = MeshFormat({"ply": "ply_binary"}.get(fmt, fmt))
    if fmt is MeshFormat.OBJ:
        return _save_obj(mesh)
    return _save_ply(mesh, binary=fmt is MeshFormat.PLY_BINARY)


def _save_ply(mesh: TriMesh, binary: bool) -> bytes:
    has_color = mesh.vertex_colors is not None
    lines = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {mesh.vertex_count}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if has_color:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines += [
        f"element face {mesh.triangle_count}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    header = ("\n".join(lines) + "\n").encode("ascii")
    verts = mesh.vertices.astype(np.float32)
    out = io.BytesIO()
    out.write(header)
    if binary:
        if has_color:
            for v, c in zip(verts, mesh.vertex_colors):
                out.write(struct.pack("<3f3B", *v, *c))
        else:
            out.write(verts.astype("<f4").tobytes())
        for t in mesh.triangles:
            out.write(struct.pack("<B3i", 3, *t))
    else:
        for i, v in enumerate(verts):
            row = f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}"
            if has_color:
                c = mesh.vertex_colors[i]
                row += f" {c[0]} {c[1]} {c[2]}"
            out.write((row + "\n").encode("ascii"))
        for t in mesh.triangles:
            out.write(f"3 {t[0]} {t[1]} {t[2]}\n".encode("ascii"))
    return out.getvalue()


def _save_obj(mesh: TriMesh) -> bytes:
    out = io.StringIO()
    for v in mesh.vertices:
        out.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
    for t in mesh.triangles:
        out.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    return out.getvalue().encode("ascii")


def load_mesh(data: bytes) -> TriMesh:
    if data[:3] == b"ply":
        return _load_ply(data)
    return _load_obj(data)


def _load_ply(data: bytes) -> TriMesh:
    try:
        header_end = data.index(b"end_header\n") + len(b"end_header\n")
    except ValueError:
        raise MalformedMesh("PLY missing end_header")
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    fmt = None
    n_vertices = n_faces = 0
    vertex_props: list[Tuple[str, str]] = []
    current = None
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vertices = int(parts[2])
            elif current == "face":
                n_faces = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            if parts[1] == "list":
                raise MalformedMesh("list property on vertex element unsupported")
            vertex_props.append((parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MalformedMesh(f"unsupported PLY format {fmt}")
    names = [n for _, n in vertex_props]
    for req in ("x", "y", "z"):
        if req not in names:
            raise MalformedMesh(f"vertex property {req} missing")
    has_color = all(c in names for c in ("red", "green", "blue"))

    if fmt == "ascii":
        text = data[header_end:].decode("ascii", errors="replace").split()
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(text):
                raise MalformedMesh("PLY truncated")
            vals = text[pos : pos + n]
            pos += n
            return vals

        rows = []
        for _ in range(n_vertices):
            rows.append(take(len(vertex_props)))
        rows = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(vertex_props)))
        tris = []
        for _ in range(n_faces):
            cnt = int(take(1)[0])
            idx = [int(v) for v in take(cnt)]
            tris.extend(_fan_triangulate(idx))
    else:
        type_fmt = {
            "float": "f", "float32": "f", "double": "d", "float64": "d",
            "uchar": "B", "uint8": "B", "char": "b", "int8": "b",
            "short": "h", "ushort": "H", "int": "i", "int32": "i",
            "uint": "I", "uint32": "I",
        }
        try:
            rec = "<" + "".join(type_fmt[t] for t, _ in vertex_props)
        except KeyError as e:
            raise MalformedMesh(f"unsupported vertex property type {e}")
        rec_size = struct.calcsize(rec)
        body = data[header_end:]
        need = rec_size * n_vertices
        if len(body) < need:
            raise MalformedMesh("PLY vertex data truncated")
        rows = np.array(
            [struct.unpack_from(rec, body, i * rec_size) for i in range(n_vertices)],
            dtype=np.float64,
        ).reshape(n_vertices, len(vertex_props))
        off = need
        tris = []
        for _ in range(n_faces):
            if off + 1 > len(body):
                raise MalformedMesh("PLY face data truncated")
            cnt = body[off]
            off += 1
            if off + 4 * cnt > len(body):
                raise MalformedMesh("PLY face data truncated")
            idx = struct.unpack_from(f"<{cnt}i", body, off)
            off += 4 * cnt
            tris.extend(_fan_triangulate(list(idx)))

    ix, iy, iz = names.index("x"), names.index("y"), names.index("z")
    vertices = rows[:, [ix, iy, iz]]
    colors = None
    if has_color:
        ic = [names.index(c) for c in ("red", "green", "blue")]
        colors = np.clip(rows[:, ic], 0, 255).astype(np.uint8)
    triangles = np.array(tris, dtype=np.int64).reshape(-1, 3)
    try:
        return TriMesh(vertices, triangles, colors)
    except MalformedMesh:
        raise
    except Exception as e:
        raise MalformedMesh(str(e)) from e


def _fan_triangulate(idx):
    if len(idx) < 3:
        raise MalformedMesh("face with fewer than 3 indices")
    return [(idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1)]


def _load_obj(data: bytes) -> TriMesh:
    vertices = []
    tris = []
    for raw in data.decode("utf-8", errors="replace").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MalformedMesh(f"bad vertex line: {line}")
            vertices.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for p in parts[1:]:
                tok = p.split("/")[0]
                i = int(tok)
                if i == 0:
                    raise MalformedMesh("OBJ indices are 1-based; 0 is invalid")
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            tris.extend(_fan_triangulate(idx))
    if not vertices:
        raise MalformedMesh("OBJ contains no vertices")
    return TriMesh(
        np.array(vertices, dtype=np.float64),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
    )


# --------------------------------------------------------------------------
# Normalization and diagnostics


def normalize_mesh(mesh: TriMesh) -> TriMesh:
    """Center the bbox at the origin and scale its longest side to 1."""
    if mesh.vertex_count < 1:
        raise DegenerateMesh("empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0:
        raise DegenerateMesh("zero-extent bounding box")
    center = (lo + hi) / 2.0
    verts = (mesh.vertices - center) / extent
    return TriMesh(verts, mesh.triangles, mesh.vertex_colors)


def thinness_report(mesh: TriMesh) -> ThinnessReport:
    """PCA extents of the vertex cloud; low e3/e2 flags degenerate slabs."""
    if mesh.vertex_count < 3:
        raise DegenerateMesh("need >= 3 vertices for PCA")
    centered = mesh.vertices - mesh.vertices.mean(axis=0)
    cov = centered.T @ centered / mesh.vertex_count
    eigvals = np.linalg.eigvalsh(cov)[::-1]  # descending
    eigvals = np.clip(eigvals, 0.0, None)
    extents = tuple(float(2.0 * np.sqrt(3.0 * ev)) for ev in eigvals)
    e1, e2, e3 = extents
    ratio = e3 / e2 if e2 > 0 else 0.0
    return ThinnessReport(extents, ratio, ratio < THIN_RATIO_THRESHOLD)


# --------------------------------------------------------------------------
# Silhouette inflation


def inflate_silhouette(
    mask: ForegroundMask, p: InflateParams = InflateParams()
) -> TriMesh:
    """Distance-transform heightfield cushion over the silhouette.

    Heights follow height_scale * sqrt(D / D_max) (balloon profile). With
    mirror_back the back face is the z-mirror of the front and side quads
    stitch the silhouette boundary, giving a watertight surface at grid
    resolution.
    """
    fg = mask.bool_array()
    if not fg.any():
        raise EmptyForeground("mask has zero coverage")
    dist = ndimage.distance_transform_edt(fg)
    dmax = float(dist.max())
    h, w = fg.shape
    step = p.grid_step
    ys = np.arange(0, h, step)
    xs = np.arange(0, w, step)
    sub_fg = fg[np.ix_(ys, xs)]
    sub_d = dist[np.ix_(ys, xs)]
    gh, gw = sub_fg.shape
    if not sub_fg.any():
        raise EmptyForeground("grid sampling removed all foreground")

    # xy in units of the longest silhouette side so heights are comparable
    span = float(max(h - 1, w - 1, 1))
    heights = p.height_scale * np.sqrt(sub_d / dmax) if dmax > 0 else np.zeros_like(sub_d)

    front_id = -np.ones((gh, gw), dtype=np.int64)
    back_id = -np.ones((gh, gw), dtype=np.int64)
    verts = []
    for gy in range(gh):
        for gx in range(gw):
            if not sub_fg[gy, gx]:
                continue
            x = xs[gx] / span
            y = -ys[gy] / span  # image y grows downward
            z = float(heights[gy, gx])
            front_id[gy, gx] = len(verts)
            verts.append((x, y, z))
            if p.mirror_back:
                back_id[gy, gx] = len(verts)
                verts.append((x, y, -z))

    tris = []
    front_edges: dict[tuple[int, int], int] = {}

    def add_front(a, b, c):
        tris.append((a, b, c))
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            front_edges[key] = front_edges.get(key, 0) + 1

    for gy in range(gh - 1):
        for gx in range(gw - 1):
            ids = (
                front_id[gy, gx],
                front_id[gy, gx + 1],
                front_id[gy + 1, gx + 1],
                front_id[gy + 1, gx],
            )
            if all(i >= 0 for i in ids):
                a, b, c, d = ids
                add_front(a, b, c)
                add_front(a, c, d)

    if p.mirror_back:
        back_of = {}
        for gy in range(gh):
            for gx in range(gw):
                if front_id[gy, gx] >= 0:
                    back_of[front_id[gy, gx]] = back_id[gy, gx]
        n_front_tris = len(tris)
        for a, b, c in list(tris[:n_front_tris]):
            tris.append((back_of[a], back_of[c], back_of[b]))
        # stitch silhouette boundary: front edges used by exactly one quad
        for (a, b), count in front_edges.items():
            if count == 1:
                tris.append((a, back_of[b], back_of[a]))
                tris.append((a, b, back_of[b]))

    mesh = TriMesh(np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64))
    return normalize_mesh(mesh)


def boundary_edge_count(mesh: TriMesh) -> int:
    """Number of edges not shared by exactly two triangles."""
    edges = {}
    for a, b, c in mesh.triangles:
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            edges[key] = edges.get(key, 0) + 1
    return sum(1 for v in edges.values() if v != 2)


# --------------------------------------------------------------------------
# Frontal texture baking


def _rasterize_depth(
    verts_px: np.ndarray, depth: np.ndarray, triangles: np.ndarray, size: int
) -> np.ndarray:
    """Orthographic depth buffer (front-most = smallest depth wins).

    Pixel centers sit at integer+0.5 in the continuous raster plane
    (top-left convention).
    """
    buf = np.full((size, size), np.inf)
    for t in triangles:
        p0, p1, p2 = verts_px[t[0]], verts_px[t[1]], verts_px[t[2]]
        z0, z1, z2 = depth[t[0]], depth[t[1]], depth[t[2]]
        xmin = max(int(np.floor(min(p0[0], p1[0], p2[0]) - 0.5)), 0)
        xmax = min(int(np.ceil(max(p0[0], p1[0], p2[0]) - 0.5)), size - 1)
        ymin = max(int(np.floor(min(p0[1], p1[1], p2[1]) - 0.5)), 0)
        ymax = min(int(np.ceil(max(p0[1], p1[1], p2[1]) - 0.5)), size - 1)
        if xmax < xmin or ymax < ymin:
            continue
        xsg, ysg = np.meshgrid(
            np.arange(xmin, xmax + 1) + 0.5, np.arange(ymin, ymax + 1) + 0.5
        )
        d = (p1[1] - p2[1]) * (p0[0] - p2[0]) + (p2[0] - p1[0]) * (p0[1] - p2[1])
        if abs(d) < 1e-12:
            continue
        l0 = ((p1[1] - p2[1]) * (xsg - p2[0]) + (p2[0] - p1[0]) * (ysg - p2[1])) / d
        l1 = ((p2[1] - p0[1]) * (xsg - p2[0]) + (p0[0] - p2[0]) * (ysg - p2[1])) / d
        l2 = 1.0 - l0 - l1
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not inside.any():
            continue
        z = l0 * z0 + l1 * z1 + l2 * z2
        sub = buf[ymin : ymax + 1, xmin : xmax + 1]
        upd = inside & (z < sub)
        sub[upd] = z[upd]
    return buf


def _bilinear_sample(px: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = px.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    c = (
        px[y0, x0] * (1 - fx) * (1 - fy)
        + px[y0, x1] * fx * (1 - fy)
        + px[y1, x0] * (1 - fx) * fy
        + px[y1, x1] * fx * fy
    )
    return np.clip(np.rint(c), 0, 255).astype(np.uint8)


def bake_frontal(
    mesh: TriMesh,
    img: RasterImage,
    mask: ForegroundMask,
    p: BakeParams = BakeParams(),
) -> TriMesh:
    """Project the input image orthographically along -z onto the mesh.

    The image's foreground bounding box maps onto the mesh's xy bounding
    box; vertices occluded in the depth buffer are filled per hidden_fill.
    """
    fg = mask.bool_array()
    if not fg.any():
        raise EmptyForeground("mask has zero coverage")
    normalized = normalize_mesh(mesh)
    verts = normalized.vertices
    size = p.raster_size

    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    span_x = max(hi[0] - lo[0], 1e-12)
    span_y = max(hi[1] - lo[1], 1e-12)
    # screen coords: +x right, +y down (flip mesh y)
    sx = (verts[:, 0] - lo[0]) / span_x * size
    sy = (hi[1] - verts[:, 1]) / span_y * size
    depth = -verts[:, 2]  # camera looks along -z; larger z is nearer
    verts_px = np.stack([sx, sy], axis=1)

    buf = _rasterize_depth(verts_px, depth, normalized.triangles, size)
    xi = np.clip(sx.astype(int), 0, size - 1)
    yi = np.clip(sy.astype(int), 0, size - 1)
    visible = depth <= buf[yi, xi] + p.depth_epsilon

    rows = np.where(fg.any(axis=1))[0]
    cols = np.where(fg.any(axis=0))[0]
    fy0, fy1 = int(rows[0]), int(rows[-1])
    fx0, fx1 = int(cols[0]), int(cols[-1])
    u = (verts[:, 0] - lo[0]) / span_x
    v = (hi[1] - verts[:, 1]) / span_y
    img_x = fx0 + u * (fx1 - fx0)
    img_y = fy0 + v * (fy1 - fy0)

    px = img.pixels()
    rgb = (
        np.repeat(px, 3, axis=2) if img.channels is Channels.GRAY8 else px[:, :, :3]
    ).astype(np.float64)
    colors = _bilinear_sample(rgb, img_x, img_y)

    if p.hidden_fill == "nearest_visible" and not visible.all():
        colors = _fill_nearest_visible(normalized, colors, visible)

    return TriMesh(mesh.vertices, mesh.triangles, colors)


def _fill_nearest_visible(
    mesh: TriMesh, colors: np.ndarray, visible: np.ndarray
) -> np.ndarray:
    """BFS over the vertex adjacency graph from the visible set."""
    n = mesh.vertex_count
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b, c in mesh.triangles:
        adj[a] += [b, c]
        adj[b] += [a, c]
        adj[c] += [a, b]
    out = colors.copy()
    assigned = visible.copy()
    frontier = sorted(np.where(visible)[0].tolist())
    while frontier:
        nxt = []
        for v in frontier:
            for u in adj[v]:
                if not assigned[u]:
                    assigned[u] = True
                    out[u] = out[v]
                    nxt.append(u)
        frontier = sorted(set(nxt))
    # isolated hidden vertices keep their projected sample
    return out
