import pytest

from motorsim.model import BindingDensity, ModelParams


@pytest.fixture
def base():
    return ModelParams(1.0, 1.0, 1.0, 0.0, BindingDensity.gaussian(1.0, 0.5))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
