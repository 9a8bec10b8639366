import numpy as np
import pytest

from voxblock.n5 import N5Container


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def container(tmp_path):
    return N5Container(tmp_path / "data.n5")


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
