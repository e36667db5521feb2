import pytest

from spacecluster.config import smoke_scenario

_VERDICTS: list = []


@pytest.fixture(scope="session")
def smoke():
    return smoke_scenario()


@pytest.fixture
def verdict():
    """Record one acceptance line: verdict(name, ok, detail)."""

    def record(name, ok, detail=""):
        _VERDICTS.append((name, ok, detail))
        return ok

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment, deselect with -m 'not slow'")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance")
    for name, ok, detail in _VERDICTS:
        mark = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        terminalreporter.write_line(f"[{mark}] {name}: {detail}")
