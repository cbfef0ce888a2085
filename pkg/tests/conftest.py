import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request, capsys):
    """Record one pass/fail line for an acceptance criterion and echo it live."""
    def record(label: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        request.config.stash.setdefault(_LINES, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
