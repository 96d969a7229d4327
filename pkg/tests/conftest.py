import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture()
def verdict(request):
    """Record one acceptance line: ``verdict(number, title, ok, detail)``."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        request.config.stash[_VERDICTS][number] = (title, bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = config.stash.get(_VERDICTS, {})
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        title, ok, detail = verdicts[number]
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}"
        terminalreporter.write_line(line + (f": {detail}" if detail else ""))
