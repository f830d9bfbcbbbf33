import math

import numpy as np
import pytest

from agmix.experiment import ExperimentConfig, solve_truth


@pytest.fixture(scope="session")
def exp_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def exp_truth(exp_config):
    return solve_truth(exp_config).final


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def normal_pdf(x, m, v):
    return math.exp(-0.5 * (x - m) ** 2 / v) / math.sqrt(2 * math.pi * v)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
