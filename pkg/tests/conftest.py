import numpy as np
import pytest

from robustfed import ClientUpdate
from robustfed.config import normalize


def make_updates(deltas, alphas=None, round=0, ids=None):
    k = len(deltas)
    alphas = [1.0 / k] * k if alphas is None else alphas
    ids = range(k) if ids is None else ids
    return [ClientUpdate(cid, round, np.asarray(d, dtype=float), a) for cid, d, a in zip(ids, deltas, alphas)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    """A quick static run: 10 clients, 6 rounds on the built-in digits."""
    return normalize({"rounds": 6, "seed": 3})


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
