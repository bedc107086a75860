import numpy as np
import pytest

from ssv.synthgen import render_scene, scene_for


def textured(seed, size=64):
    """Small synthetic picture with faces and a random background."""
    img, _ = render_scene(scene_for(seed, 0, size, size))
    return img


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_images():
    return [textured(s) for s in range(6)]


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
