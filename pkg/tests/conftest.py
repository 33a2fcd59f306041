import pytest

_RESULTS: dict[str, list[tuple[bool, str]]] = {}


@pytest.fixture
def record():
    """Store one verdict per criterion part; printed at the end of the session."""

    def _record(criterion: str, passed: bool, detail: str) -> None:
        _RESULTS.setdefault(criterion, []).append((bool(passed), detail))

    return _record


def _key(c: str):
    head = c.split()[0]
    return (int(head) if head.isdigit() else 99, c)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    merged: dict[str, list[tuple[bool, str]]] = {}
    for name, parts in _RESULTS.items():
        merged.setdefault(name.split()[0], []).extend(parts)
    for crit in sorted(merged, key=_key):
        parts = merged[crit]
        verdict = "PASS" if all(p for p, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {crit:>2}: {verdict}  " + "; ".join(d for _, d in parts))
