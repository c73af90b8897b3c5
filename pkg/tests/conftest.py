import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")


@pytest.fixture
def record(request):
    """Log one acceptance line; returns ``ok`` so the test can assert on it."""
    lines = request.config.stash[_LINES]

    def _record(number, ok, detail, elapsed):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s]"
        lines.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
