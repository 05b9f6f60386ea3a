import numpy as np
import pytest

from flatlift.conditions import ForegroundMask, foreground_mask
from flatlift.core import RasterImage, TriMesh
from flatlift.errors import DegenerateMesh, MalformedMesh
from flatlift.mesh import (
    BakeParams,
    InflateParams,
    MeshFormat,
    bake_frontal,
    boundary_edge_count,
    inflate_silhouette,
    load_mesh,
    normalize_mesh,
    save_mesh,
    thinness_report,
)

from conftest import disk_image, square_mask_image


def tetrahedron(colors=False):
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64
    )
    tris = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    c = (
        np.array([[255, 0, 0], [0, 255, 0], [0, 0, 255], [10, 20, 30]], dtype=np.uint8)
        if colors
        else None
    )
    return TriMesh(verts, tris, c)


def make_mask(bool_arr):
    img = RasterImage.from_array(np.where(bool_arr, 255, 0).astype(np.uint8))
    return ForegroundMask(img, float(bool_arr.sum()) / bool_arr.size)


def random_mesh(rng, n=50):
    verts = rng.normal(size=(n, 3)) * rng.uniform(0.5, 3.0, size=3)
    tris = []
    while len(tris) < n:
        t = rng.integers(0, n, size=3)
        if len(set(t.tolist())) == 3:
            tris.append(t)
    return TriMesh(verts, np.array(tris))


class TestMeshIo:
    @pytest.mark.parametrize("fmt", [MeshFormat.PLY_BINARY, MeshFormat.PLY_ASCII])
    def test_tetrahedron_ply_roundtrip(self, fmt):
        mesh = tetrahedron(colors=True)
        out = load_mesh(save_mesh(mesh, fmt))
        assert np.array_equal(out.vertices, mesh.vertices)
        assert np.array_equal(out.triangles, mesh.triangles)
        assert np.array_equal(out.vertex_colors, mesh.vertex_colors)

    def test_obj_roundtrip_drops_colors(self):
        mesh = tetrahedron(colors=True)
        out = load_mesh(save_mesh(mesh, MeshFormat.OBJ))
        assert np.array_equal(out.vertices, mesh.vertices)
        assert np.array_equal(out.triangles, mesh.triangles)
        assert out.vertex_colors is None

    def test_ply_vertex_count_mismatch_rejected(self):
        mesh = tetrahedron()
        data = save_mesh(mesh, MeshFormat.PLY_ASCII)
        bad = data.replace(b"element vertex 4", b"element vertex 5")
        with pytest.raises(MalformedMesh):
            load_mesh(bad)

    def test_ply_out_of_range_index_rejected(self):
        data = (
            b"ply\nformat ascii 1.0\nelement vertex 3\n"
            b"property float x\nproperty float y\nproperty float z\n"
            b"element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            b"0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n"
        )
        with pytest.raises(MalformedMesh):
            load_mesh(data)

    def test_obj_zero_index_rejected(self):
        with pytest.raises(MalformedMesh):
            load_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")

    def test_binary_ply_truncated_rejected(self):
        data = save_mesh(tetrahedron(), MeshFormat.PLY_BINARY)
        with pytest.raises(MalformedMesh):
            load_mesh(data[:-8])


class TestNormalizeMesh:
    def test_cube_0_2_maps_to_centered_unit(self):
        corners = np.array(
            [[x, y, z] for x in (0, 2) for y in (0, 2) for z in (0, 2)], dtype=float
        )
        tris = np.array([[0, 1, 2], [4, 5, 6]])
        out = normalize_mesh(TriMesh(corners, tris))
        assert out.vertices.min() == -0.5
        assert out.vertices.max() == 0.5

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        mesh = random_mesh(rng)
        once = normalize_mesh(mesh)
        twice = normalize_mesh(once)
        assert np.allclose(once.vertices, twice.vertices)

    def test_bbox_postcondition_bruteforce(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            out = normalize_mesh(random_mesh(rng))
            lo = out.vertices.min(axis=0)
            hi = out.vertices.max(axis=0)
            assert np.allclose((lo + hi) / 2, 0, atol=1e-12)
            assert np.isclose((hi - lo).max(), 1.0)

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateMesh):
            normalize_mesh(TriMesh(np.zeros((3, 3)), np.array([[0, 1, 2]])))


class TestThinness:
    # closed-form: covariance of the 8 corners of an a x b x c box is
    # diag(a^2/4, b^2/4, c^2/4), so extents are sqrt(3) * side.

    def test_unit_cube_ratio_one(self):
        corners = np.array(
            [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float
        )
        rep = thinness_report(TriMesh(corners, np.array([[0, 1, 2]])))
        assert rep.thinness_ratio == pytest.approx(1.0, abs=1e-6)
        assert not rep.flagged_thin
        assert rep.principal_extents[0] == pytest.approx(np.sqrt(3.0), abs=1e-9)

    def test_slab_ratio_and_flag(self):
        corners = np.array(
            [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 0.01)]
        )
        rep = thinness_report(TriMesh(corners, np.array([[0, 1, 2]])))
        assert rep.thinness_ratio == pytest.approx(0.01, abs=1e-3)
        assert rep.flagged_thin

    def test_rotation_invariance_random_meshes(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            mesh = random_mesh(rng, n=20)
            base = thinness_report(mesh).thinness_ratio
            # random rotation via QR decomposition
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            rot = TriMesh(mesh.vertices @ q.T, mesh.triangles)
            assert thinness_report(rot).thinness_ratio == pytest.approx(
                base, abs=1e-6
            )

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        mesh = random_mesh(rng, n=30)
        base = thinness_report(mesh).thinness_ratio
        for k in (1e-3, 0.5, 7.0, 1e4):
            scaled = TriMesh(mesh.vertices * k, mesh.triangles)
            assert abs(thinness_report(scaled).thinness_ratio - base) < 1e-9

    def test_too_few_vertices_rejected(self):
        with pytest.raises(DegenerateMesh):
            thinness_report(TriMesh(np.zeros((2, 3)), np.zeros((0, 3), dtype=int)))

    def test_coplanar_gives_zero_e3(self):
        rng = np.random.default_rng(8)
        verts = rng.normal(size=(20, 3))
        verts[:, 2] = 0.0
        rep = thinness_report(TriMesh(verts, np.array([[0, 1, 2]])))
        assert rep.principal_extents[2] == pytest.approx(0.0, abs=1e-9)
        assert rep.thinness_ratio == 0.0 or rep.thinness_ratio < 1e-9


class TestInflate:
    def test_disk_cushion_not_thin(self):
        img, inside = disk_image(size=64, radius=24)
        mesh = inflate_silhouette(make_mask(inside))
        rep = thinness_report(mesh)
        assert rep.thinness_ratio >= 0.3

    def test_z_mirror_symmetry(self):
        img, inside = disk_image(size=48, radius=18)
        mesh = inflate_silhouette(make_mask(inside))
        flipped = mesh.vertices * np.array([1.0, 1.0, -1.0])
        # vertex sets match as sets
        a = np.array(sorted(map(tuple, np.round(mesh.vertices, 9))))
        b = np.array(sorted(map(tuple, np.round(flipped, 9))))
        assert np.allclose(a, b, atol=1e-6)

    def test_watertight_boundary_edges(self):
        img, inside = disk_image(size=64, radius=22)
        mesh = inflate_silhouette(make_mask(inside))
        assert boundary_edge_count(mesh) == 0

    def test_square_max_height_matches_distance_transform_oracle(self):
        img, inside = square_mask_image(size=65, half=24)
        p = InflateParams(grid_step=1, height_scale=0.9)
        mesh = inflate_silhouette(make_mask(inside), p)
        # brute-force distance oracle: center has D == D_max, so the raw
        # (pre-normalization) peak height equals height_scale exactly;
        # verify via the normalized mesh's height/width proportion.
        ys, xs = np.where(inside)
        dmax = 0
        bg = ~inside
        bys, bxs = np.where(bg)
        for y, x in ((32, 32),):
            d = np.sqrt(((bys - y) ** 2 + (bxs - x) ** 2)).min()
            dmax = max(dmax, d)
        # raw model: xy span = 48 px / 64 px = 0.75 of long side unit,
        # z span = 2*height_scale
        raw_xy = (2 * 24) / 64.0
        raw_z = 2 * 0.9
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        span = hi - lo
        assert span[2] / span[0] == pytest.approx(raw_z / raw_xy, rel=0.08)

    def test_random_blobs_valid_and_idempotent_normalize(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            size = 32
            blob = np.zeros((size, size), dtype=bool)
            for _ in range(rng.integers(1, 4)):
                cy, cx = rng.integers(8, 24, size=2)
                r = rng.integers(4, 9)
                yy, xx = np.mgrid[0:size, 0:size]
                blob |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
            mesh = inflate_silhouette(make_mask(blob), InflateParams(grid_step=2))
            # TriMesh invariants hold by construction; normalize idempotent
            again = normalize_mesh(mesh)
            assert np.allclose(again.vertices, mesh.vertices, atol=1e-12)

    def test_empty_mask_rejected(self):
        from flatlift.errors import EmptyForeground

        with pytest.raises(EmptyForeground):
            inflate_silhouette(make_mask(np.zeros((8, 8), dtype=bool)))


class TestBake:
    def test_constant_red_image_colors_everything(self):
        img = RasterImage.from_array(
            np.tile(np.array([255, 0, 0], dtype=np.uint8), (64, 64, 1))
        )
        _, inside = disk_image(size=64, radius=22)
        mask = make_mask(inside)
        mesh = inflate_silhouette(mask)
        for fill in ("nearest_visible", "mirror_front"):
            baked = bake_frontal(mesh, img, mask, BakeParams(hidden_fill=fill))
            assert baked.vertex_colors is not None
            assert np.all(baked.vertex_colors == (255, 0, 0))

    def test_half_plane_coloring(self):
        size = 64
        arr = np.zeros((size, size, 3), dtype=np.uint8)
        arr[:, : size // 2] = (0, 255, 0)
        arr[:, size // 2 :] = (0, 0, 255)
        img = RasterImage.from_array(arr)
        _, inside = square_mask_image(size=size, half=24)
        mask = make_mask(inside)
        mesh = inflate_silhouette(mask)
        baked = bake_frontal(mesh, img, mask)
        # analytic projection oracle: mesh x in [-0.5*w_frac, ...] maps back
        # to image columns; allow a 1-px band at the seam
        lo = normalize_mesh(mesh).vertices.min(axis=0)
        hi = normalize_mesh(mesh).vertices.max(axis=0)
        cols = np.where(inside.any(axis=0))[0]
        fx0, fx1 = cols[0], cols[-1]
        verts = normalize_mesh(mesh).vertices
        front = verts[:, 2] > 0
        u = (verts[:, 0] - lo[0]) / (hi[0] - lo[0])
        img_x = fx0 + u * (fx1 - fx0)
        seam = size / 2.0
        for i in np.where(front)[0]:
            if abs(img_x[i] - seam) <= 1.0:
                continue
            expected = (0, 255, 0) if img_x[i] < seam else (0, 0, 255)
            assert tuple(baked.vertex_colors[i]) == expected, (
                i,
                img_x[i],
                baked.vertex_colors[i],
            )

    def test_vertex_and_triangle_lists_unchanged(self):
        img, inside = disk_image(size=48, radius=16, fg=(10, 200, 50))
        mask = make_mask(inside)
        mesh = inflate_silhouette(mask)
        baked = bake_frontal(mesh, img, mask)
        assert np.array_equal(baked.vertices, mesh.vertices)
        assert np.array_equal(baked.triangles, mesh.triangles)

    def test_triangle_order_independence(self):
        img, inside = disk_image(size=48, radius=16, fg=(200, 10, 50))
        mask = make_mask(inside)
        mesh = inflate_silhouette(mask)
        rng = np.random.default_rng(4)
        perm = rng.permutation(mesh.triangle_count)
        shuffled = TriMesh(mesh.vertices, mesh.triangles[perm])
        a = bake_frontal(mesh, img, mask, BakeParams(hidden_fill="mirror_front"))
        b = bake_frontal(shuffled, img, mask, BakeParams(hidden_fill="mirror_front"))
        visible_colors_a = a.vertex_colors
        visible_colors_b = b.vertex_colors
        assert np.array_equal(visible_colors_a, visible_colors_b)

    def test_two_overlapping_quads_depth_buffer(self):
        # near quad (z=0.5) in front of far quad (z=-0.5); all front samples
        # must resolve to the near quad's color
        verts = np.array(
            [
                [-1, -1, 0.5], [1, -1, 0.5], [1, 1, 0.5], [-1, 1, 0.5],
                [-1, -1, -0.5], [1, -1, -0.5], [1, 1, -0.5], [-1, 1, -0.5],
            ],
            dtype=float,
        )
        tris = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
        mesh = TriMesh(verts, tris)
        img = RasterImage.from_array(np.full((8, 8, 3), 200, dtype=np.uint8))
        mask = make_mask(np.ones((8, 8), dtype=bool))
        from flatlift.mesh import _rasterize_depth

        n = normalize_mesh(mesh)
        size = 32
        lo = n.vertices.min(axis=0)
        hi = n.vertices.max(axis=0)
        sx = (n.vertices[:, 0] - lo[0]) / (hi[0] - lo[0]) * size
        sy = (hi[1] - n.vertices[:, 1]) / (hi[1] - lo[1]) * size
        depth = -n.vertices[:, 2]
        buf = _rasterize_depth(np.stack([sx, sy], axis=1), depth, n.triangles, size)
        near_depth = -n.vertices[0, 2]
        finite = np.isfinite(buf)
        assert finite.sum() > 0.9 * size * size
        assert np.allclose(buf[finite], near_depth, atol=1e-9)
