import contextlib

import pytest

# (number, title, passed, detail) in the order the criteria ran
CRITERIA: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion; an exception inside counts as FAIL."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        notes: list[str] = []
        try:
            yield notes
        except BaseException as exc:
            CRITERIA.append((number, title, False, "; ".join(notes + [f"{type(exc).__name__}: {exc}"])))
            raise
        CRITERIA.append((number, title, True, "; ".join(notes)))

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(CRITERIA):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
