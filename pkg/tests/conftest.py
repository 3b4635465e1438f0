import numpy as np
import pytest

from fluorpoison.data import SyntheticSignSpec, generate_synthetic

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_samples():
    return generate_synthetic(SyntheticSignSpec(images_per_class=6, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
