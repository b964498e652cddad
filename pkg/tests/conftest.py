from __future__ import annotations

import pytest

from softlex import _kernels
from softlex.lexicon import build_lexicon

FIGURE_WORDS = ["中山", "山西", "中山西", "山西路", "中山西路"]
FIGURE_SENTENCE = "中山西路"

BACKENDS = _kernels.available_backends()


@pytest.fixture
def figure_lex():
    return build_lexicon(FIGURE_WORDS)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
