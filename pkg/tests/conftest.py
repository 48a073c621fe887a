import pytest

_CRITERIA: dict = {}


@pytest.fixture(scope="session")
def criterion():
    """Record the outcome of one part of a numbered acceptance criterion."""

    def record(number, part, passed, detail):
        _CRITERIA.setdefault(number, []).append((part, bool(passed), detail))
        print(f"criterion {number} [{part}]: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{name}: {'ok' if p else 'FAIL'} ({d})" for name, p, d in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
