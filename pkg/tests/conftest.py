from contextlib import contextmanager

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion():
    """Context manager that records one acceptance line, pass or fail, for the terminal summary."""

    @contextmanager
    def run(number: int, title: str):
        note = {"detail": ""}
        try:
            yield note
        except BaseException:
            ACCEPTANCE.append((number, title, False, note["detail"]))
            raise
        ACCEPTANCE.append((number, title, True, note["detail"]))

    return run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
