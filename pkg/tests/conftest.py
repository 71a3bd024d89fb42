import numpy as np
import pytest
from hypothesis import settings

from feasbound import Binding, builtin_case, three_bus_case

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

B = Binding.parse

# acceptance lines collected by tests/test_acceptance.py, printed at the end
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def case3():
    return three_bus_case()


@pytest.fixture(scope="session")
def case14():
    return builtin_case("case14", vlimits=(0.9, 1.1), neutralize_transformers=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
