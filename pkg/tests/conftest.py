"""Shared grids and fields for the test suite."""

from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from oslcflow import SpaceTimeGrid, sgn_field

settings.register_profile("numeric", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("numeric")


@pytest.fixture(scope="session")
def sgn():
    """The compressive field ``(-sgn x1, 0)``."""
    return sgn_field()


@pytest.fixture(scope="session")
def grid33():
    return SpaceTimeGrid.square(2.0, 33, nt=21)


@pytest.fixture(scope="session")
def grid65():
    return SpaceTimeGrid.square(2.0, 65, nt=51)



ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
