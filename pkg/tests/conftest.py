from __future__ import annotations

import numpy as np
import pytest

_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


class AcceptanceLog:
    def record(self, number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        print(line)
        _ACCEPTANCE.append((number, name, bool(passed), detail))
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())
