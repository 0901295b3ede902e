import contextlib
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("lab", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

_ACCEPTANCE = {}


class _Record:
    def __init__(self):
        self.details = []

    def note(self, text: str) -> None:
        self.details.append(text)


@pytest.fixture
def acceptance():
    """Context manager that records a PASS/FAIL line for an acceptance criterion."""

    @contextlib.contextmanager
    def run(number: int, title: str):
        rec = _Record()
        start = time.perf_counter()
        try:
            yield rec
        except BaseException as exc:
            rec.note(f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            _ACCEPTANCE[number] = ("FAIL", title, rec.details, time.perf_counter() - start)
            raise
        _ACCEPTANCE[number] = ("PASS", title, rec.details, time.perf_counter() - start)

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, details, elapsed = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} {status}: {title} ({elapsed:.1f} s)")
        for line in details:
            terminalreporter.write_line(f"    {line}")
