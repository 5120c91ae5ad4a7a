import numpy as np
import pytest

from somnosense.core import TimeSeries


def sine(freq, duration, rate=30.0, amp=1.0, phase=0.0, t0=0.0):
    t = np.arange(int(round(duration * rate))) / rate
    return TimeSeries(amp * np.sin(2 * np.pi * freq * t + phase), rate, t0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def _report(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
