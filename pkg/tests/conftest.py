import numpy as np
import pytest

from token_screen import (QuadraticBinaryEntropy, ShannonEntropy, TypeModel, binary_belief,
                          build_menu, build_skeleton, stopping_law)


@pytest.fixture(scope="session")
def quad2():
    return QuadraticBinaryEntropy(2.0)


@pytest.fixture(scope="session")
def sym_skeleton(quad2):
    return build_skeleton(quad2, binary_belief(0.5), 0.125)


@pytest.fixture(scope="session")
def sym_law(sym_skeleton):
    return stopping_law(sym_skeleton, sym_skeleton.default_horizon())


@pytest.fixture(scope="session")
def skew_skeleton(quad2):
    return build_skeleton(quad2, binary_belief(0.6), 0.125)


@pytest.fixture(scope="session")
def skew_law(skew_skeleton):
    return stopping_law(skew_skeleton, skew_skeleton.default_horizon())


@pytest.fixture(scope="session")
def shannon3_skeleton():
    return build_skeleton(ShannonEntropy(3), np.array([0.5, 0.3, 0.2]), 0.5)


@pytest.fixture(scope="session")
def uniform12():
    return TypeModel.uniform(1.0, 2.0)


@pytest.fixture(scope="session")
def leading_menu(uniform12, sym_law):
    return build_menu(uniform12, sym_law, 0.125)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
