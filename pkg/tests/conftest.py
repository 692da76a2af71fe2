import numpy as np
import pytest
from hypothesis import settings

from tlbo.space import SearchSpace, VariableSpec

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")


@pytest.fixture
def mixed_space():
    return SearchSpace(
        (
            VariableSpec("lr", "continuous", 0.0, 10.0),
            VariableSpec("depth", "integer", 1, 200),
            VariableSpec("crit", "categorical", categories=("gini", "entropy", "log_loss")),
            VariableSpec("frac", "continuous", -1.0, 1.0),
        )
    )


@pytest.fixture
def unit1():
    return SearchSpace((VariableSpec("x", "continuous", 0.0, 1.0),))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    # expose phase reports so fixtures can read the call outcome in teardown
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)
