import re

import pytest

_RESULTS: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion, then assert it."""
    def check(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
        _RESULTS[name] = line
        print(line)
        assert ok, line
    return check


def _order(name):
    m = re.match(r"C(\d+)(\w*)", name)
    return (int(m.group(1)), m.group(2)) if m else (0, name)


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for name in sorted(_RESULTS, key=_order):
            terminalreporter.write_line(_RESULTS[name])
