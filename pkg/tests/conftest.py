import pytest

from tmce.geometry import catalog_domain

ACCEPTANCE_LINES = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture(scope="session")
def unit_square():
    return catalog_domain("euclidean_square(1.0)", 1 / 16)


@pytest.fixture(scope="session")
def unit_disk():
    return catalog_domain("euclidean_disk(1.0)", 1 / 16)


@pytest.fixture(scope="session")
def grim_interval():
    return catalog_domain("interval(1.0)", 1 / 64)
