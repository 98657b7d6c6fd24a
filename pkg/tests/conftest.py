import os

import pytest

from chdbc import _kernels

ACCEPTANCE_LINES: dict = {}


def pytest_report_header(config):
    return f"chdbc kernels: {_kernels.BACKEND} (CHDBC_KERNELS={os.environ.get('CHDBC_KERNELS', '')!r})"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def acceptance_line():
    def emit(number: int, passed: bool, title: str, detail: str):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
    return emit
