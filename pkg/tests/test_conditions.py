import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatlift.conditions import (
    CannyParams,
    ForegroundMask,
    canny_edges,
    estimate_depth_fallback,
    flatness_report,
    foreground_mask,
    normalize_depth,
)
from flatlift.core import ConditionKind, RasterImage
from flatlift.errors import DimensionMismatch, EmptyForeground

from conftest import disk_image, lambertian_sphere_image, square_mask_image


def make_mask(bool_arr):
    img = RasterImage.from_array(np.where(bool_arr, 255, 0).astype(np.uint8))
    return ForegroundMask(img, float(bool_arr.sum()) / bool_arr.size)


class TestCanny:
    def test_vertical_step_edge_localized(self):
        arr = np.zeros((64, 64), dtype=np.uint8)
        arr[:, 32:] = 255
        cond = canny_edges(RasterImage.from_array(arr))
        edges = cond.map.pixels()[:, :, 0] == 255
        ys, xs = np.where(edges)
        assert len(xs) > 0
        # every edge pixel within 1 px of the true edge column
        assert np.all(np.abs(xs - 32) <= 1)
        # >= 95% concentrated on a single column
        best_col = np.bincount(xs).argmax()
        assert (xs == best_col).sum() / len(xs) >= 0.95

    def test_constant_image_empty_edges(self):
        arr = np.full((32, 32), 137, dtype=np.uint8)
        cond = canny_edges(RasterImage.from_array(arr))
        assert not np.any(cond.map.pixels())

    def test_disk_edge_is_closed_ring_near_circle(self):
        img, inside = disk_image(size=64, radius=20)
        cond = canny_edges(img)
        edges = cond.map.pixels()[:, :, 0] == 255
        ys, xs = np.where(edges)
        assert len(xs) > 0
        c = (64 - 1) / 2.0
        dist = np.sqrt((xs - c) ** 2 + (ys - c) ** 2)
        assert np.all(np.abs(dist - 20) <= 1.5)
        # closed ring: a single 8-connected component whose removal from a
        # small annulus window still separates inside from outside
        from scipy import ndimage

        labels, n = ndimage.label(edges, structure=np.ones((3, 3)))
        assert n == 1
        # flood from the border without crossing edges must not reach center
        free = ~edges
        lab, _ = ndimage.label(free)
        assert lab[0, 0] != lab[31, 31]

    def test_output_is_binary(self, disk_sprite):
        img, _ = disk_sprite
        vals = np.unique(canny_edges(img).map.pixels())
        assert set(vals.tolist()) <= {0, 255}

    def test_nms_no_adjacent_pair_along_direction(self, sphere_sprite):
        img, _ = sphere_sprite
        edges = canny_edges(img).map.pixels()[:, :, 0] == 255
        # recompute quantized directions exactly as the detector does
        from flatlift.conditions import (
            _SOBEL_X,
            _SOBEL_Y,
            _gaussian_blur,
            _quantize_direction,
        )
        from scipy import ndimage

        blurred = _gaussian_blur(img.luminance(), 1.4)
        gx = ndimage.convolve(blurred, _SOBEL_X, mode="nearest")
        gy = ndimage.convolve(blurred, _SOBEL_Y, mode="nearest")
        q = _quantize_direction(gx, gy)
        offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
        h, w = edges.shape
        for y, x in zip(*np.where(edges)):
            dy, dx = offsets[int(q[y, x])]
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and edges[ny, nx] and q[ny, nx] == q[y, x]:
                pytest.fail(f"adjacent same-direction edge pair at {(y, x)}")

    def test_hysteresis_monotone_in_low_threshold(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            arr = rng.integers(0, 256, size=(24, 24), dtype=np.uint8)
            img = RasterImage.from_array(arr)
            strong = canny_edges(
                img, CannyParams(low_threshold=60, high_threshold=120, auto_threshold=False)
            )
            weak = canny_edges(
                img, CannyParams(low_threshold=20, high_threshold=120, auto_threshold=False)
            )
            s = strong.map.pixels()[:, :, 0] == 255
            w = weak.map.pixels()[:, :, 0] == 255
            assert np.all(w[s])  # lowering low never removes an edge pixel

    def test_invariant_to_constant_offset(self):
        rng = np.random.default_rng(5)
        arr = rng.integers(0, 200, size=(32, 32), dtype=np.uint8)
        a = canny_edges(RasterImage.from_array(arr)).map.data
        b = canny_edges(RasterImage.from_array(arr + 50)).map.data
        assert a == b

    def test_bad_thresholds_rejected(self):
        with pytest.raises(ValueError):
            CannyParams(low_threshold=100, high_threshold=50)


class TestNormalizeDepth:
    def test_affine_rescale_against_bruteforce(self):
        raw = np.array(
            [[10, 30, 50, 70], [90, 110, 10, 60], [0, 0, 0, 0], [0, 0, 0, 0]],
            dtype=np.uint8,
        )
        fg = np.zeros((4, 4), dtype=bool)
        fg[:2] = True
        cond = normalize_depth(RasterImage.from_array(raw), make_mask(fg))
        out = cond.map.pixels()[:, :, 0]
        # independent brute-force oracle
        vals = raw[fg].astype(float)
        lo, hi = vals.min(), vals.max()
        expected = np.zeros((4, 4), dtype=np.uint8)
        expected[fg] = np.rint((raw[fg] - lo) * 255.0 / (hi - lo)).astype(np.uint8)
        assert np.array_equal(out, expected)
        assert out[fg].min() == 0 and out[fg].max() == 255
        assert not out[~fg].any()

    def test_constant_foreground_maps_to_128(self):
        raw = np.full((4, 4), 77, dtype=np.uint8)
        fg = np.ones((4, 4), dtype=bool)
        out = normalize_depth(RasterImage.from_array(raw), make_mask(fg)).map.pixels()
        assert np.all(out == 128)

    def test_invert_on_extremes(self):
        raw = np.array([[0, 255]], dtype=np.uint8)
        fg = np.ones((1, 2), dtype=bool)
        out = normalize_depth(
            RasterImage.from_array(raw), make_mask(fg), invert=True
        ).map.pixels()[:, :, 0]
        assert out.tolist() == [[255, 0]]

    def test_idempotent_without_invert(self):
        rng = np.random.default_rng(9)
        raw = rng.integers(0, 256, (8, 8), dtype=np.uint8)
        fg = rng.random((8, 8)) > 0.3
        fg[0, 0] = True
        mask = make_mask(fg)
        once = normalize_depth(RasterImage.from_array(raw), mask)
        twice = normalize_depth(once.map, mask)
        assert twice.map.data == once.map.data

    def test_dimension_mismatch(self):
        raw = RasterImage.from_array(np.zeros((4, 4), dtype=np.uint8))
        mask = make_mask(np.ones((3, 3), dtype=bool))
        with pytest.raises(DimensionMismatch):
            normalize_depth(raw, mask)


class TestForegroundMask:
    def test_alpha_rule(self):
        rng = np.random.default_rng(21)
        arr = rng.integers(0, 256, (10, 10, 4), dtype=np.uint8)
        mask = foreground_mask(RasterImage.from_array(arr))
        assert np.array_equal(mask.bool_array(), arr[:, :, 3] >= 128)

    def test_centered_square_flood_fill(self):
        img, inside = square_mask_image(size=40, half=10)
        mask = foreground_mask(img)
        # oracle: exhaustive BFS flood fill from the border
        px = img.pixels().astype(float)
        bg = px[0, 0]
        near = np.sqrt(((px - bg) ** 2).sum(axis=2)) <= 20.0
        from collections import deque

        h, w = near.shape
        seen = np.zeros((h, w), dtype=bool)
        dq = deque()
        for x in range(w):
            for y in (0, h - 1):
                if near[y, x] and not seen[y, x]:
                    seen[y, x] = True
                    dq.append((y, x))
        for y in range(h):
            for x in (0, w - 1):
                if near[y, x] and not seen[y, x]:
                    seen[y, x] = True
                    dq.append((y, x))
        while dq:
            y, x = dq.popleft()
            for ny, nx in ((y + 1, x), (y - 1, x), (y, x + 1), (y, x - 1)):
                if 0 <= ny < h and 0 <= nx < w and near[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    dq.append((ny, nx))
        assert np.array_equal(mask.bool_array(), ~seen)
        assert mask.coverage == pytest.approx(inside.sum() / inside.size)

    def test_fully_background_coverage_zero(self):
        img = RasterImage.from_array(np.full((8, 8, 3), 255, dtype=np.uint8))
        assert foreground_mask(img).coverage == 0.0

    def test_rotation_equivariance(self):
        img, _ = disk_image(size=32, radius=9, fg=(10, 200, 30), bg=(250, 250, 250))
        arr = img.pixels()
        rot = RasterImage.from_array(np.ascontiguousarray(np.rot90(arr)))
        m = foreground_mask(img).bool_array()
        mr = foreground_mask(rot).bool_array()
        assert np.array_equal(mr, np.rot90(m))


class TestFlatness:
    def test_three_color_cartoon_is_flat(self):
        # three flat fills with zero interior gradients
        arr = np.full((48, 48, 3), 255, dtype=np.uint8)
        arr[6:20, 6:20] = (200, 40, 40)
        arr[6:20, 28:42] = (40, 40, 200)
        arr[28:42, 6:42] = (0, 0, 0)
        img = RasterImage.from_array(arr)
        report = flatness_report(img, foreground_mask(img))
        assert report.distinct_color_count == 3
        assert report.flat_pixel_fraction == 1.0
        assert report.is_flat

    def test_shaded_sphere_is_not_flat(self, sphere_sprite):
        img, _ = sphere_sprite
        # border flood fill: background is black here
        mask = foreground_mask(img)
        report = flatness_report(img, mask)
        assert not report.is_flat
        assert report.shading_score > 0

    def test_constant_foreground(self):
        img, _ = square_mask_image(size=24, half=8)
        report = flatness_report(img, foreground_mask(img))
        assert report.distinct_color_count == 1
        assert report.flat_pixel_fraction == 1.0
        assert report.is_flat

    def test_empty_foreground_raises(self):
        img = RasterImage.from_array(np.full((8, 8, 3), 255, dtype=np.uint8))
        with pytest.raises(EmptyForeground):
            flatness_report(img, foreground_mask(img))


class TestDepthFallback:
    def test_distance_transform_profile(self):
        img, inside = square_mask_image(size=33, half=10)
        mask = foreground_mask(img)
        depth = estimate_depth_fallback(mask).pixels()[:, :, 0]
        assert depth[16, 16] == 255  # center is farthest from background
        assert not depth[~inside].any()
