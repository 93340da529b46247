import pytest

from svquant.jrmq import REFERENCE_RUNS, build_reference_grid
from svquant.model import REFERENCE_PRESETS, preset

_GRIDS = {}


def reference_grid(name):
    """Build each preset grid at most once per test session."""
    if name not in _GRIDS:
        _GRIDS[name] = build_reference_grid(name)
    return _GRIDS[name]


@pytest.fixture(scope="session")
def grids():
    return reference_grid


@pytest.fixture(scope="session")
def specs():
    return {name: preset(REFERENCE_PRESETS[run.preset]) for name, run in REFERENCE_RUNS.items()}


ACCEPTANCE = {}


@pytest.fixture(scope="session")
def report():
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
