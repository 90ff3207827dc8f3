import os

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_LINES = []


@pytest.fixture
def report():
    """Record a one-line result that is echoed in the terminal summary."""

    def emit(name: str, passed: bool, detail: str = "") -> None:
        _LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
