import numpy as np
import pytest

from flatlift.core import RasterImage


def disk_image(size=64, radius=20, fg=(255, 255, 255), bg=(0, 0, 0)):
    """Filled disk sprite on a uniform canvas."""
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    inside = (xx - c) ** 2 + (yy - c) ** 2 <= radius**2
    canvas = np.empty((size, size, 3), dtype=np.uint8)
    canvas[:] = bg
    canvas[inside] = fg
    return RasterImage.from_array(canvas), inside


def square_mask_image(size=64, half=20, fg=(255, 0, 0), bg=(255, 255, 255)):
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    inside = (np.abs(xx - c) <= half) & (np.abs(yy - c) <= half)
    canvas = np.empty((size, size, 3), dtype=np.uint8)
    canvas[:] = bg
    canvas[inside] = fg
    return RasterImage.from_array(canvas), inside


def lambertian_sphere_image(size=64, radius=24, bg=(0, 0, 0)):
    """Smooth-shaded sphere: diffuse light from the upper-left."""
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    dx = (xx - c) / radius
    dy = (yy - c) / radius
    inside = dx**2 + dy**2 <= 1.0
    nz = np.sqrt(np.clip(1.0 - dx**2 - dy**2, 0.0, 1.0))
    light = np.array([-0.5, -0.5, 0.707])
    light = light / np.linalg.norm(light)
    shade = np.clip(-dx * light[0] + -dy * light[1] + nz * light[2], 0.0, 1.0)
    canvas = np.zeros((size, size, 3), dtype=np.uint8)
    canvas[:] = bg
    val = np.clip(np.rint(40 + 215 * shade), 0, 255).astype(np.uint8)
    for ch in range(3):
        canvas[:, :, ch][inside] = val[inside]
    return RasterImage.from_array(canvas), inside


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    criteria = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid or "test_criterion_" not in nodeid:
                continue
            number = int(nodeid.split("test_criterion_")[1].split("_")[0])
            ok = outcome == "passed" and criteria.get(number, True)
            criteria[number] = ok
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        verdict = "PASS" if criteria[number] else "FAIL"
        terminalreporter.write_line(f"CRITERION {number}: {verdict}")


@pytest.fixture
def disk_sprite():
    return disk_image()


@pytest.fixture
def sphere_sprite():
    return lambertian_sphere_image()
