import numpy as np
import pytest

from vagflow.mesh import Mesh, generate_structured


@pytest.fixture
def unit_square() -> Mesh:
    return Mesh.from_arrays([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_meshes():
    return [
        generate_structured("cartesian", 2),
        generate_structured("split-triangles", 2),
        generate_structured("kershaw-like", 3, 0.5),
    ]


# acceptance verdicts, echoed after the run so they survive output capture
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
