import numpy as np
import pytest

from homeas import crossing, field
from homeas.scenario import preset


@pytest.fixture(scope="session")
def urban():
    return preset("urban-macro")


@pytest.fixture(scope="session")
def rural():
    return preset("rural-macro")


@pytest.fixture(scope="session")
def urban_moments(urban):
    return crossing.spectral_moments(urban.shadow)


@pytest.fixture(scope="session")
def urban_stable(urban):
    return field.make_stable_params(urban.link, urban.shadow, urban.field)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Collects one verdict line per criterion for the terminal summary."""

    def record(number, passed, text):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
