import numpy as np
import pytest

from rdlab.models import build_cache


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def dirichlet3():
    return build_cache(3, 1.0, "dirichlet")


@pytest.fixture(scope="session")
def caches():
    """A few operators with variable coefficients on both boundary conditions."""
    return [
        build_cache(12, 1.0, "dirichlet", "constant", (1.0,)),
        build_cache(20, 2.0, "neumann", "affine", (0.5, 1.0)),
        build_cache(17, 1.0, "dirichlet", "bump", (0.2, 1.0, 0.4, 0.1)),
        build_cache(9, 3.0, "neumann", "table", (0.0, 1.0, 3.0, 1.0, 0.3, 2.0)),
    ]


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
