import warnings

import pytest

from mnmdoa.geometry import build_coprime_linear, build_nested_linear

ACCEPTANCE_LINES = []


@pytest.fixture
def coprime_4243():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_coprime_linear(4, 2, 4, 3)


@pytest.fixture
def nested_34():
    return build_nested_linear(3, 4)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
