"""Collects acceptance verdicts and prints one line per criterion at the end."""
from __future__ import annotations

import pytest

_VERDICTS: dict[int, list[tuple[str, bool, str]]] = {}


class Verdicts:
    """Per-part results; a criterion passes only when every recorded part does."""

    def record(self, criterion: int, part: str, ok: bool, detail: str) -> bool:
        _VERDICTS.setdefault(criterion, []).append((part, bool(ok), detail))
        return bool(ok)


@pytest.fixture(scope="session")
def verdicts() -> Verdicts:
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_VERDICTS):
        parts = _VERDICTS[crit]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{name} {'ok' if ok else 'FAIL'} ({d})" for name, ok, d in parts)
        terminalreporter.write_line(f"criterion {crit}: {status} - {detail}")
