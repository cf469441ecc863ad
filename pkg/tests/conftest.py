import numpy as np
import pytest

from diescatter.medium import Background, Grid, homogeneous_square, layered_square, rasterize


@pytest.fixture(scope="session")
def bg():
    return Background.normalized()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_grid():
    return Grid.centered(6, 0.05, n2=5)


@pytest.fixture(scope="session", params=["16", "negative", "layered"])
def test_medium(request, small_grid):
    side = 0.2
    spec = {"16": homogeneous_square(side, 16.0),
            "negative": homogeneous_square(side, -16 + 1.5j),
            "layered": layered_square(side, 16.0, 2.5 + 20j)}[request.param]
    return rasterize(spec, small_grid)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
