import math

import pytest
from hypothesis import settings

from semirv.dist import exponential, geometric, make_distribution
from semirv.tailfn import TailFunctionSpec

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def exp1():
    return exponential(1.0)


@pytest.fixture(scope="session")
def geo():
    return geometric(math.log(2.0))


@pytest.fixture(scope="session")
def lp():
    """(alpha=1, LogPower(gamma)) distributions by gamma."""
    cache = {}

    def build(gamma, alpha=1.0):
        key = (gamma, alpha)
        if key not in cache:
            cache[key] = make_distribution(alpha, TailFunctionSpec.log_power(gamma))
        return cache[key]
    return build


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
