from __future__ import annotations

import numpy as np
import pytest

from citysafe.cluster import PointSet
from citysafe.fixture import write_city
from oracles import blobs

THREE_CENTERS = [(0.0, 0.0), (1.5, 0.0), (0.75, 1.3)]
TWO_CENTERS = [(0.0, 0.0), (3.0, 3.0)]


@pytest.fixture(scope="session")
def three_blobs() -> PointSet:
    X, _ = blobs(np.random.default_rng(7), THREE_CENTERS, 100, 0.05)
    return PointSet(X)


@pytest.fixture(scope="session")
def two_blobs() -> PointSet:
    X, _ = blobs(np.random.default_rng(11), TWO_CENTERS, 40, 0.2)
    return PointSet(X)


@pytest.fixture(scope="session")
def city(tmp_path_factory):
    """Path to the config of a freshly written synthetic city."""
    return write_city(tmp_path_factory.mktemp("city"))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
