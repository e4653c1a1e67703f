import numpy as np
import pytest

from lcuprep.lattice import ModelParams, SectorBasis, build_thirring, to_sector_matrix
from lcuprep.eigen import ground_state, truncate

REF_BITS = ("0101", "0110", "1001", "0011")
REF_AMPS = (-0.9346, -0.2117, -0.2117, -0.1850)


@pytest.fixture(scope="session")
def small_params():
    return ModelParams(4, 1.0, 0.1)


@pytest.fixture(scope="session")
def small_ground(small_params):
    H = build_thirring(small_params)
    basis = SectorBasis(4, 2)
    return ground_state(to_sector_matrix(H, basis), basis)


@pytest.fixture(scope="session")
def small_truncated(small_ground):
    return truncate(small_ground, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_hermitian(rng, dim):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (A + A.conj().T) / 2


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
