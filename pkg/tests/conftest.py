import functools

import numpy as np
import pytest

from fatdisc.fixtures import legendrian_disc
from fatdisc.geometry import holomorphic_contact_model, integrable_example
from fatdisc.mesh import MeshMap, build_disc_mesh

ACCEPTANCE_LINES = {}


def record_acceptance(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@functools.lru_cache(maxsize=None)
def mesh_at(resolution: int):
    return build_disc_mesh(resolution)


@functools.lru_cache(maxsize=None)
def legendrian_map(resolution: int, coeffs=(0, 0, 1)):
    return MeshMap.from_function(mesh_at(resolution), legendrian_disc(coeffs))


@pytest.fixture(scope="session")
def model():
    return holomorphic_contact_model()


@pytest.fixture(scope="session")
def integrable():
    return integrable_example()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
