import sys

import pytest

from escapekit.models import EntireModel, LogTransform


@pytest.fixture(scope="session")
def quarter():
    """Exponential map with parameter 1/4, rescaled by 2 (the certified scale)."""
    return LogTransform(EntireModel.exponential(0.25), 2.0)


@pytest.fixture(scope="session")
def tenth():
    """Exponential map with parameter 0.1 and K = 1: tracts lie well inside Re > 0."""
    return LogTransform(EntireModel.exponential(0.1), 1.0)


def pytest_terminal_summary(terminalreporter):
    """Repeat the one-line verdict of every acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
