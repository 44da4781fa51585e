import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``acceptance(number, title)`` is a context manager that records one
    PASS/FAIL line; the lines are printed at the end of the session."""
    lines = request.config.stash.setdefault(_LINES, [])

    class Recorder:
        def __init__(self, number, title):
            self.number, self.title, self.note = number, title, ""

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            status = "PASS" if exc_type is None else "FAIL"
            note = self.note if exc_type is None else (self.note or str(exc).splitlines()[0][:120])
            line = f"criterion {self.number:>3}: {status}  {self.title}" + (f"  [{note}]" if note else "")
            lines.append(line)
            print(line)
            return False

    return Recorder


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
