import pytest

from cotdr.pipeline import Simulator
from cotdr.scenario import load_scenario

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; the summary is printed at the end of the run."""

    def record(name: str, passed: bool, detail: str) -> bool:
        line = f"{name}: {'PASS' if passed else 'FAIL'} ({detail})"
        _ACCEPTANCE.append((name, passed, detail))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")


@pytest.fixture(scope="session")
def ideal_desk():
    """Noiseless desk simulator, shared because propagation is cached per link."""
    return Simulator(load_scenario("desk-10km", overrides={"frontend": {"ideal": True}}))
