import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from archsearch.searchspace import FULL_SPACE, GENOME_LENGTH, SearchSpace, sample_uniform

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

STUB = [sys.executable, "-m", "archsearch.stub"]


@st.composite
def genomes(draw, space: SearchSpace = FULL_SPACE):
    seed = draw(st.integers(0, 2**32 - 1))
    return sample_uniform(np.random.default_rng(seed), space)


@st.composite
def genome_batches(draw, space: SearchSpace = FULL_SPACE, min_size=1, max_size=40):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(min_size, max_size))
    return sample_uniform(np.random.default_rng(seed), space, n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reduced():
    return SearchSpace.reduced()


@pytest.fixture(scope="session")
def minimal_genome():
    g = np.zeros(GENOME_LENGTH, dtype=np.int64)
    for b in range(5):
        g[1 + 9 * b] = 2
        g[2 + 9 * b : 6 + 9 * b] = 1
    return g


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
